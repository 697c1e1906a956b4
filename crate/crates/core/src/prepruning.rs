//! One-shot pruning before training.
//!
//! Every routine returns the set of *removed* weight ids. Biases are never
//! pruned. Random pruning and Synflow never read training data; DP-SNIP reads
//! it once through a Gaussian mechanism and reports the `ε` it spent.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Model, ParamRole};
use crate::data::Dataset;
use crate::error::{DpError, Result};
use crate::mask::{count_at_rate, IndexMask};
use crate::mechanisms::{clip_per_sample, l2_norm, ClipParams};
use crate::privacy::{calibrate_sigma, PrivacyBudget};
use crate::rng::BoxMuller;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneCriterion {
    /// No pre-pruning.
    #[default]
    None,
    Random,
    Synflow,
    DpSnip,
}

impl PruneCriterion {
    pub fn name(&self) -> &'static str {
        match self {
            PruneCriterion::None => "none",
            PruneCriterion::Random => "random",
            PruneCriterion::Synflow => "synflow",
            PruneCriterion::DpSnip => "dp_snip",
        }
    }
}

/// Outcome of pre-pruning, written to the run's summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub criterion: PruneCriterion,
    pub rate: f64,
    pub eps_spent: f64,
    /// Surviving weights per parameterized layer.
    pub retained_per_layer: BTreeMap<usize, usize>,
    pub pruned_total: usize,
    /// Noise multiplier of the DP-SNIP query, if one was made.
    pub sigma: Option<f64>,
}

impl PruneReport {
    pub fn new(
        model: &Model,
        criterion: PruneCriterion,
        rate: f64,
        pruned: &IndexMask,
        eps_spent: f64,
    ) -> Self {
        let retained_per_layer = model
            .layout()
            .weight_blocks()
            .map(|b| (b.layer, b.len - pruned.count_in_layer(b.layer)))
            .collect();
        Self {
            criterion,
            rate,
            eps_spent,
            retained_per_layer,
            pruned_total: pruned.len(),
            sigma: None,
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(DpError::config(format!(
            "pruning rate must be in [0, 1), got {rate}: a layer cannot be removed entirely"
        )));
    }
    Ok(())
}

/// Removes `floor(rate · n)` weights uniformly without replacement from each
/// layer of `n` weights.
pub fn random_preprune<R: Rng>(model: &Model, rate: f64, rng: &mut R) -> Result<IndexMask> {
    check_rate(rate)?;
    let mut removed = Vec::new();
    for block in model.layout().weight_blocks() {
        let k = count_at_rate(rate, block.len);
        let picks = rand::seq::index::sample(rng, block.len, k);
        removed.extend(picks.into_iter().map(|i| block.offset + i));
    }
    IndexMask::new(model.layout(), removed)
}

/// Synaptic saliency `|θ| ⊙ ∂R/∂|θ|` with `R = 1ᵀ(Π_l |θ^l|)1`.
///
/// Scores are held as `relative[i] · exp(log_scale)`: each layer is divided
/// by its largest magnitude before the pass, and the product of those
/// factors is carried in log space so deep products cannot overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct SynflowScores {
    relative: Vec<f64>,
    log_scale: f64,
}

impl SynflowScores {
    /// Scores up to the common positive factor; order-equivalent to the true scores.
    pub fn relative(&self) -> &[f64] {
        &self.relative
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// True scores per flat id (biases score 0). Fails when the common factor
    /// is outside `f64` range.
    pub fn values(&self) -> Result<Vec<f64>> {
        let scale = self.log_scale.exp();
        let out: Vec<f64> = self.relative.iter().map(|r| r * scale).collect();
        if !scale.is_finite() || out.iter().any(|v| !v.is_finite()) {
            return Err(DpError::Numerical {
                location: "synflow scores".into(),
                message: format!("score scale e^{} exceeds f64 range", self.log_scale),
            });
        }
        Ok(out)
    }
}

/// Data-free synaptic-flow scores of every weight; biases are excluded from
/// the flow and score 0.
pub fn synflow_scores(model: &Model) -> Result<SynflowScores> {
    let layout = model.layout();
    if layout.weight_blocks().next().is_none() {
        return Err(DpError::config("synflow needs at least one weight layer"));
    }
    let mut params = vec![0.0; model.num_params()];
    let mut log_scale = 0.0;
    for block in layout.weight_blocks() {
        let src = &model.params()[block.range()];
        let max = src.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let scale = if max > 0.0 { max } else { 1.0 };
        log_scale += scale.ln();
        for (d, w) in params[block.range()].iter_mut().zip(src) {
            *d = w.abs() / scale;
        }
    }
    let probe = Model::with_params(model.spec().clone(), params)?;
    let ones = vec![1.0; model.input_shape().iter().product()];
    let (_, grad) = probe.logit_gradient(&ones, &vec![1.0; model.num_classes()]);
    let relative: Vec<f64> = probe
        .params()
        .iter()
        .zip(&grad)
        .enumerate()
        .map(|(i, (w, g))| match layout.locate(i) {
            Some((_, ParamRole::Weight, _)) => w * g,
            _ => 0.0,
        })
        .collect();
    if let Some(i) = relative.iter().position(|v| !v.is_finite()) {
        return Err(DpError::Numerical {
            location: layout.describe(i),
            message: "non-finite synflow score".into(),
        });
    }
    Ok(SynflowScores {
        relative,
        log_scale,
    })
}

/// Number of weights removed after round `r` of `rounds` under the
/// exponential schedule `keep_r = (1 - rate)^(r / rounds)`.
pub fn synflow_schedule(rate: f64, rounds: usize, total: usize) -> Vec<usize> {
    let mut prev = 0;
    (1..=rounds)
        .map(|r| {
            let k = if r == rounds {
                count_at_rate(rate, total)
            } else {
                let keep = (1.0 - rate).powf(r as f64 / rounds as f64);
                count_at_rate(1.0 - keep, total)
            };
            prev = prev.max(k);
            prev
        })
        .collect()
}

/// Iterative Synflow: each round rescores the surviving weights and removes
/// the globally lowest-scoring ones down to the scheduled keep fraction.
///
/// Ties rank by flat id (lower id removed first). A layer that would lose its
/// last weight keeps its highest-ranked one, and that weight is exempt from
/// later rounds.
pub fn synflow_preprune(model: &Model, rate: f64, rounds: usize) -> Result<IndexMask> {
    check_rate(rate)?;
    if rounds == 0 {
        return Err(DpError::config("synflow needs at least one round"));
    }
    let layout = model.layout();
    let prunable = layout.prunable_ids();
    let n_layers = layout.weight_blocks().count();
    let mut removed = vec![false; model.num_params()];
    let mut protected = vec![false; model.num_params()];
    let mut guard_triggers = 0;
    let mut work = model.clone();

    for target in synflow_schedule(rate, rounds, prunable.len()) {
        for (p, &r) in work.params_mut().iter_mut().zip(&removed) {
            if r {
                *p = 0.0;
            }
        }
        let scores = synflow_scores(&work)?;
        let s = scores.relative();
        let mut order: Vec<usize> = prunable
            .iter()
            .copied()
            .filter(|&i| !protected[i])
            .collect();
        // Already-removed weights stay removed: they sort first.
        order.sort_by(|&a, &b| {
            removed[b]
                .cmp(&removed[a])
                .then(s[a].total_cmp(&s[b]))
                .then(a.cmp(&b))
        });
        let target = target.min(order.len());
        removed.iter_mut().for_each(|r| *r = false);
        for &i in &order[..target] {
            removed[i] = true;
        }
        for block in layout.weight_blocks() {
            if block.range().all(|i| removed[i]) {
                // Highest-ranked weight of the layer in this round's order.
                let keep = *order
                    .iter()
                    .rev()
                    .find(|&&i| block.range().contains(&i))
                    .expect("layer has weights");
                removed[keep] = false;
                protected[keep] = true;
                guard_triggers += 1;
            }
        }
        if guard_triggers > n_layers {
            return Err(DpError::config(format!(
                "synflow collapse guard fired {guard_triggers} times for {n_layers} layers; lower the pruning rate"
            )));
        }
    }
    let ids = prunable.into_iter().filter(|&i| removed[i]).collect();
    IndexMask::new(layout, ids)
}

/// Connection sensitivities and the resulting mask of one SNIP query.
#[derive(Debug, Clone)]
pub struct SnipOutcome {
    pub removed: IndexMask,
    /// `s_j` per prunable id, in ascending id order; sums to 1.
    pub sensitivities: Vec<f64>,
}

const SNIP_CHUNK: usize = 256;

/// Positions of the `floor(rate · n)` smallest values, ties by lower position.
pub fn lowest_fraction(values: &[f64], rate: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order.truncate(count_at_rate(rate, values.len()));
    order
}

/// SNIP with the connection gradients privatized by a Gaussian mechanism of
/// multiplier `sigma` (0 disables the noise).
///
/// Each example's connection gradient `g_j = θ_j ∂l/∂θ_j` (over weights) is
/// clipped to `clip`, the clipped vectors are averaged over the whole dataset
/// (`B = |D|`), and `N(0, (σC/B)²)` noise is added per connection. The
/// `floor(rate · m)` connections with the smallest `|g̃_j| / Σ|g̃_k|` are
/// removed, ties by lower id.
pub fn snip_with_sigma<R: Rng>(
    model: &Model,
    data: &Dataset,
    rate: f64,
    clip: ClipParams,
    sigma: f64,
    rng: R,
) -> Result<SnipOutcome> {
    check_rate(rate)?;
    if data.is_empty() {
        return Err(DpError::config("SNIP needs a nonempty dataset"));
    }
    if !(sigma >= 0.0) {
        return Err(DpError::config(format!(
            "noise multiplier must be >= 0, got {sigma}"
        )));
    }
    let weights = IndexMask::prunable(model.layout());
    let theta: Vec<f64> = weights
        .indices()
        .iter()
        .map(|&i| model.params()[i])
        .collect();
    let m = weights.len();
    let b = data.len();
    let mut sum = vec![0.0; m];
    let rows: Vec<usize> = (0..b).collect();
    for chunk in rows.chunks(SNIP_CHUNK) {
        let (x, y) = data.batch(chunk);
        let mut grads = model.per_sample_gradients(&x, &y, &weights)?;
        for row in grads.rows_mut() {
            for (g, t) in row.iter_mut().zip(&theta) {
                *g *= t;
            }
        }
        let clipped = clip_per_sample(grads, clip);
        debug_assert!(clipped
            .rows()
            .all(|r| l2_norm(r) <= clip.norm() * (1.0 + 1e-12)));
        for row in clipped.rows() {
            for (s, g) in sum.iter_mut().zip(row) {
                *s += g;
            }
        }
    }
    let bf = b as f64;
    let mut noisy: Vec<f64> = sum.iter().map(|s| s / bf).collect();
    if sigma > 0.0 {
        let std = sigma * clip.norm() / bf;
        let mut normal = BoxMuller::new(rng);
        for v in &mut noisy {
            *v += std * normal.sample();
        }
    }
    let total: f64 = noisy.iter().map(|v| v.abs()).sum();
    let sensitivities: Vec<f64> = if total > 0.0 {
        noisy.iter().map(|v| v.abs() / total).collect()
    } else {
        vec![1.0 / m as f64; m]
    };
    let removed = lowest_fraction(&sensitivities, rate)
        .into_iter()
        .map(|j| weights.indices()[j])
        .collect();
    Ok(SnipOutcome {
        removed: IndexMask::new(model.layout(), removed)?,
        sensitivities,
    })
}

/// DP-SNIP: one Gaussian query over the pruning set, with `σ` calibrated so
/// that the query alone is `(eps_pp, delta_p)`-DP. Returns the removed mask,
/// the `ε` charged (always `eps_pp`, even at rate 0) and the `σ` used.
pub fn dp_snip_preprune<R: Rng>(
    model: &Model,
    data: &Dataset,
    rate: f64,
    clip: ClipParams,
    eps_pp: f64,
    delta_p: f64,
    rng: R,
) -> Result<(IndexMask, f64, f64)> {
    let sigma = calibrate_sigma(PrivacyBudget::new(eps_pp, delta_p)?, 1.0, 1)?;
    let outcome = snip_with_sigma(model, data, rate, clip, sigma, rng)?;
    Ok((outcome.removed, eps_pp, sigma))
}
