//! The DP-SSGD loop: pre-prune once, then per step drop gradients, clip,
//! noise, update the selected coordinates and account for the query.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Model, ParamLayout, Tensor};
use crate::checkpoint::{AccountantParts, Checkpoint};
use crate::data::{BatchMode, BatchSampler, Dataset, FixedBatches, PoissonBatches};
use crate::error::{DpError, Result};
use crate::graddrop::DropPolicy;
use crate::mask::IndexMask;
use crate::mechanisms::{clip_per_sample, dp_mean_update, l2_norm, noisy_sum, ClipParams};
use crate::prepruning::{
    dp_snip_preprune, random_preprune, synflow_preprune, PruneCriterion, PruneReport,
};
use crate::privacy::{calibrate_sigma, split_budget, AccountantState, PrivacyBudget};
use crate::rng::{stream, Purpose};

/// How the training noise is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Calibrate `σ` so the whole run, pre-pruning included, spends `epsilon`.
    Budget { epsilon: f64 },
    /// Use this `σ` as is. `0` trains without noise and without a guarantee.
    Sigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub criterion: PruneCriterion,
    pub rate: f64,
    /// Synflow rounds.
    pub rounds: usize,
    /// Per-example clip norm of the DP-SNIP query.
    pub clip_norm: f64,
    /// Budget of the DP-SNIP query.
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for PruneSpec {
    fn default() -> Self {
        Self {
            criterion: PruneCriterion::None,
            rate: 0.0,
            rounds: 100,
            clip_norm: 1.0,
            epsilon: 0.0,
            delta: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub noise: NoiseSpec,
    pub delta: f64,
    pub clip_norm: f64,
    pub prune: PruneSpec,
    pub drop: DropPolicy,
    pub learning_rate: f64,
    /// Expected batch size; Poisson sampling uses `q = batch_size / N`.
    pub batch_size: usize,
    pub batch_mode: BatchMode,
    pub steps: u64,
    /// Steps between evaluations; defaults to one epoch.
    pub eval_every: Option<u64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DpError::Config(msg));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if self.steps == 0 {
            return bad("step count must be >= 1".into());
        }
        if self.eval_every == Some(0) {
            return bad("eval_every must be >= 1".into());
        }
        ClipParams::new(self.clip_norm)?;
        self.drop.validate()?;
        if !(0.0..1.0).contains(&self.prune.rate) {
            return bad(format!(
                "pruning rate must be in [0, 1), got {}",
                self.prune.rate
            ));
        }
        match self.noise {
            NoiseSpec::Budget { epsilon } => PrivacyBudget::new(epsilon, self.delta).map(|_| ()),
            NoiseSpec::Sigma(s) if !(s >= 0.0) || !s.is_finite() => {
                bad(format!("noise multiplier must be >= 0, got {s}"))
            }
            NoiseSpec::Sigma(_) => Ok(()),
        }
    }
}

/// One row of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub epoch: f64,
    pub train_loss: f64,
    pub test_acc: f64,
    pub eps_so_far: f64,
    pub pi_pp: f64,
    pub pi_gd: f64,
    pub sigma: f64,
    pub seed: u64,
}

/// What a single step touched, for callers that audit the loop.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: u64,
    pub batch_len: usize,
    pub selected: IndexMask,
    pub mean_loss: f64,
}

/// Mutable state of a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    pub step: u64,
    /// `None` when training without noise.
    pub accountant: Option<AccountantState>,
    pub pre_pruned: IndexMask,
    pub eps_pp: f64,
    pub sigma: f64,
    pub metrics: Vec<MetricsRow>,
}

impl TrainState {
    /// `ε` spent so far: pre-pruning plus the training queries, added.
    pub fn epsilon(&self, delta: f64) -> Result<f64> {
        match &self.accountant {
            Some(acc) => Ok(self.eps_pp + acc.to_eps_delta(delta)?),
            None => Ok(f64::INFINITY),
        }
    }
}

/// `θ[I_s] += delta`, leaving every other coordinate untouched.
pub fn apply_selected_update(
    params: &mut [f64],
    selected: &IndexMask,
    delta: &[f64],
) -> Result<()> {
    if selected.universe() != params.len() || selected.len() != delta.len() {
        return Err(DpError::Internal(format!(
            "update of {} values over {} selected ids for {} parameters",
            delta.len(),
            selected.len(),
            params.len()
        )));
    }
    for (&i, d) in selected.indices().iter().zip(delta) {
        params[i] += d;
    }
    Ok(())
}

/// Checks that the non-selected coordinates did not move. The update only
/// writes to selected ids, so this is a guard rather than an operation.
pub fn freeze_complement(before: &[f64], after: &[f64], not_selected: &IndexMask) -> Result<()> {
    match not_selected
        .indices()
        .iter()
        .find(|&&i| before[i].to_bits() != after[i].to_bits())
    {
        Some(&i) => Err(DpError::Internal(format!("frozen coordinate {i} changed"))),
        None => Ok(()),
    }
}

const EVAL_CHUNK: usize = 512;

/// Top-1 accuracy of `model` on `data`. Uses no privacy budget.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(DpError::config("cannot evaluate on an empty dataset"));
    }
    let mut correct = 0usize;
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let (x, y) = data.batch(chunk);
        let logits = model.forward(&x)?;
        correct += y
            .iter()
            .enumerate()
            .filter(|&(b, &label)| argmax(logits.item(b)) == label)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// A configured run over one training set.
pub struct Trainer<'a> {
    config: TrainConfig,
    train: &'a Dataset,
    test: Option<&'a Dataset>,
    sampler: Box<dyn BatchSampler + Send + Sync>,
    clip: ClipParams,
    live_weights: IndexMask,
    biases: IndexMask,
    eval_every: u64,
    steps_per_epoch: f64,
    loss_sum: f64,
    loss_count: usize,
    prune_report: PruneReport,
    pub state: TrainState,
}

impl<'a> Trainer<'a> {
    /// Pre-prunes `model` and calibrates the training noise.
    ///
    /// `prune_data` is what DP-SNIP queries; it defaults to `train`, and the
    /// query is charged either way.
    pub fn new(
        config: TrainConfig,
        mut model: Model,
        train: &'a Dataset,
        prune_data: Option<&Dataset>,
        test: Option<&'a Dataset>,
    ) -> Result<Self> {
        config.validate()?;
        check_data(&model, train)?;
        if let Some(t) = test {
            check_data(&model, t)?;
        }
        let seed = config.seed;
        let p = &config.prune;
        let mut sigma_pp = None;
        let (pre_pruned, eps_pp) = match p.criterion {
            PruneCriterion::None => {
                if p.rate != 0.0 {
                    return Err(DpError::config(
                        "a nonzero pruning rate needs a pruning criterion",
                    ));
                }
                (IndexMask::empty(model.layout()), 0.0)
            }
            PruneCriterion::Random => (
                random_preprune(&model, p.rate, &mut stream(seed, Purpose::PrePrune, 0))?,
                0.0,
            ),
            PruneCriterion::Synflow => (synflow_preprune(&model, p.rate, p.rounds)?, 0.0),
            PruneCriterion::DpSnip => {
                let data = prune_data.unwrap_or(train);
                check_data(&model, data)?;
                let (mask, eps, sigma) = dp_snip_preprune(
                    &model,
                    data,
                    p.rate,
                    ClipParams::new(p.clip_norm)?,
                    p.epsilon,
                    p.delta,
                    stream(seed, Purpose::PruneNoise, 0),
                )?;
                sigma_pp = Some(sigma);
                (mask, eps)
            }
        };
        for &i in pre_pruned.indices() {
            model.params_mut()[i] = 0.0;
        }
        let mut prune_report = PruneReport::new(&model, p.criterion, p.rate, &pre_pruned, eps_pp);
        prune_report.sigma = sigma_pp;

        let n = train.len();
        let q = (config.batch_size as f64 / n as f64).min(1.0);
        let sigma = match config.noise {
            NoiseSpec::Sigma(s) => s,
            NoiseSpec::Budget { epsilon } => {
                let total = PrivacyBudget::new(epsilon, config.delta)?;
                let split = split_budget(total, p.criterion, eps_pp)?;
                calibrate_sigma(
                    PrivacyBudget::new(split.eps_gd, config.delta)?,
                    q,
                    config.steps,
                )?
            }
        };
        let accountant = if sigma > 0.0 {
            Some(AccountantState::new(q, sigma)?)
        } else {
            None
        };
        let sampler: Box<dyn BatchSampler + Send + Sync> = match config.batch_mode {
            BatchMode::Poisson => Box::new(PoissonBatches::new(n, q, seed)),
            BatchMode::Fixed => {
                if config.batch_size > n {
                    return Err(DpError::config(format!(
                        "batch size {} exceeds dataset size {n}",
                        config.batch_size
                    )));
                }
                Box::new(FixedBatches::new(n, config.batch_size, seed))
            }
        };
        let layout = model.layout().clone();
        let live_weights = IndexMask::prunable(&layout).difference(&pre_pruned)?;
        let biases = IndexMask::full(&layout).difference(&IndexMask::prunable(&layout))?;
        let steps_per_epoch = n as f64 / config.batch_size as f64;
        let eval_every = config
            .eval_every
            .unwrap_or_else(|| (steps_per_epoch.round() as u64).max(1));
        Ok(Self {
            clip: ClipParams::new(config.clip_norm)?,
            config,
            train,
            test,
            sampler,
            live_weights,
            biases,
            eval_every,
            steps_per_epoch,
            loss_sum: 0.0,
            loss_count: 0,
            prune_report,
            state: TrainState {
                model,
                step: 0,
                accountant,
                pre_pruned,
                eps_pp,
                sigma,
                metrics: Vec::new(),
            },
        })
    }

    /// Continues a run from a checkpoint written by the same configuration.
    pub fn resume(
        config: TrainConfig,
        checkpoint: &Checkpoint,
        train: &'a Dataset,
        test: Option<&'a Dataset>,
    ) -> Result<Self> {
        if checkpoint.seed != config.seed {
            return Err(DpError::config("checkpoint seed differs from config seed"));
        }
        let model = checkpoint.model()?;
        // Pre-pruning is not rerun: the stored mask is authoritative.
        let fresh = TrainConfig {
            prune: PruneSpec {
                criterion: PruneCriterion::None,
                rate: 0.0,
                ..config.prune
            },
            noise: match &checkpoint.accountant {
                Some(a) => NoiseSpec::Sigma(a.sigma),
                None => NoiseSpec::Sigma(0.0),
            },
            ..config.clone()
        };
        let mut trainer = Self::new(fresh, model, train, None, test)?;
        trainer.config = config;
        let pre_pruned = checkpoint.pre_pruned_mask(&trainer.state.model)?;
        trainer.live_weights =
            IndexMask::prunable(trainer.state.model.layout()).difference(&pre_pruned)?;
        trainer.state.pre_pruned = pre_pruned;
        trainer.state.eps_pp = checkpoint.eps_pp;
        trainer.state.step = checkpoint.step;
        trainer.state.accountant = checkpoint
            .accountant
            .as_ref()
            .map(|a| a.restore())
            .transpose()?;
        Ok(trainer)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn prune_report(&self) -> &PruneReport {
        &self.prune_report
    }

    pub fn layout(&self) -> &std::sync::Arc<ParamLayout> {
        self.state.model.layout()
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.steps
    }

    pub fn checkpoint(&self, normalization: Option<crate::data::Normalization>) -> Checkpoint {
        Checkpoint {
            spec: self.state.model.spec().clone(),
            params: self.state.model.params().to_vec(),
            pre_pruned: self.state.pre_pruned.indices().to_vec(),
            accountant: self.state.accountant.as_ref().map(AccountantParts::of),
            eps_pp: self.state.eps_pp,
            delta: self.config.delta,
            normalization,
            step: self.state.step,
            seed: self.config.seed,
        }
    }

    /// One DP-SSGD step.
    pub fn step(&mut self) -> Result<StepRecord> {
        let t = self.state.step;
        let seed = self.config.seed;
        let rows = self.sampler.batch(t);

        let selected_weights = if self.config.drop.rate == 0.0 || self.live_weights.is_empty() {
            self.live_weights.clone()
        } else {
            let mut rng = stream(seed, Purpose::GradDrop, t);
            self.config
                .drop
                .select(&self.live_weights, self.state.model.params(), &mut rng)?
                .1
        };
        let selected = selected_weights.union(&self.biases)?;

        let (x, y) = self.train.batch(&rows);
        let (grads, losses) = match self
            .state
            .model
            .per_sample_gradients_with_loss(&x, &y, &selected)
        {
            Err(DpError::Numerical { .. }) => return Err(self.diverged(f64::NAN)),
            other => other?,
        };
        let batch_loss: f64 = losses.iter().sum();
        if !batch_loss.is_finite() {
            return Err(self.diverged(batch_loss));
        }
        let clipped = clip_per_sample(grads, self.clip);
        debug_assert!(clipped
            .rows()
            .all(|r| l2_norm(r) <= self.clip.norm() * (1.0 + 1e-12)));
        let sum = noisy_sum(
            &clipped,
            self.state.sigma,
            self.clip,
            stream(seed, Purpose::Noise, t),
        )?;
        let delta = dp_mean_update(&sum, self.config.batch_size, self.config.learning_rate)?;
        apply_selected_update(self.state.model.params_mut(), &selected, &delta)?;
        if let Some(acc) = &mut self.state.accountant {
            acc.step();
        }
        self.state.step += 1;
        self.loss_sum += batch_loss;
        self.loss_count += losses.len();

        if self.state.step.is_multiple_of(self.eval_every) || self.is_done() {
            self.record_metrics()?;
        }
        Ok(StepRecord {
            step: t,
            batch_len: rows.len(),
            selected,
            mean_loss: if losses.is_empty() {
                0.0
            } else {
                batch_loss / losses.len() as f64
            },
        })
    }

    fn diverged(&self, loss: f64) -> DpError {
        DpError::Diverged {
            step: self.state.step,
            loss,
            dump: Box::new(self.checkpoint(self.train.normalization().cloned())),
        }
    }

    fn record_metrics(&mut self) -> Result<()> {
        let test_acc = match self.test {
            Some(t) => evaluate(&self.state.model, t)?,
            None => f64::NAN,
        };
        let train_loss = if self.loss_count == 0 {
            f64::NAN
        } else {
            self.loss_sum / self.loss_count as f64
        };
        self.loss_sum = 0.0;
        self.loss_count = 0;
        self.state.metrics.push(MetricsRow {
            step: self.state.step,
            epoch: self.state.step as f64 / self.steps_per_epoch,
            train_loss,
            test_acc,
            eps_so_far: self.state.epsilon(self.config.delta)?,
            pi_pp: self.config.prune.rate,
            pi_gd: self.config.drop.rate,
            sigma: self.state.sigma,
            seed: self.config.seed,
        });
        Ok(())
    }

    /// Runs the remaining steps.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    /// Final `ε`, pre-pruning included.
    pub fn epsilon(&self) -> Result<f64> {
        self.state.epsilon(self.config.delta)
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }
}

fn check_data(model: &Model, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(DpError::config("dataset is empty"));
    }
    if data.sample_shape() != model.input_shape() {
        return Err(DpError::config(format!(
            "dataset samples have shape {:?}, model expects {:?}",
            data.sample_shape(),
            model.input_shape()
        )));
    }
    if data.num_classes() > model.num_classes() {
        return Err(DpError::config(format!(
            "dataset has {} classes, model outputs {}",
            data.num_classes(),
            model.num_classes()
        )));
    }
    Ok(())
}

/// Result of [`dp_ssgd_train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub prune_report: PruneReport,
    pub epsilon: f64,
}

/// Trains `model` on `train` with the full DP-SSGD pipeline.
pub fn dp_ssgd_train(
    config: &TrainConfig,
    model: Model,
    train: &Dataset,
    prune_data: Option<&Dataset>,
    test: Option<&Dataset>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), model, train, prune_data, test)?;
    trainer.run()?;
    let epsilon = trainer.epsilon()?;
    let prune_report = trainer.prune_report.clone();
    Ok(TrainOutcome {
        state: trainer.into_state(),
        prune_report,
        epsilon,
    })
}

/// Logits-free convenience: accuracy of `model` over explicit tensors.
pub fn accuracy_of(model: &Model, x: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(DpError::config("cannot evaluate on an empty dataset"));
    }
    let logits = model.forward(x)?;
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(b, &l)| argmax(logits.item(b)) == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{LayerSpec, ModelSpec};
    use crate::data::synth_blobs;
    use crate::graddrop::DropCriterion;

    fn spec() -> ModelSpec {
        ModelSpec {
            input_shape: vec![4],
            layers: vec![
                LayerSpec::FullyConnected {
                    out_features: 8,
                    in_features: 4,
                    bias: true,
                },
                LayerSpec::Relu,
                LayerSpec::FullyConnected {
                    out_features: 3,
                    in_features: 8,
                    bias: true,
                },
            ],
        }
    }

    fn config() -> TrainConfig {
        TrainConfig {
            noise: NoiseSpec::Budget { epsilon: 3.0 },
            delta: 1e-5,
            clip_norm: 1.0,
            prune: PruneSpec::default(),
            drop: DropPolicy::new(DropCriterion::Random, 0.0).unwrap(),
            learning_rate: 0.5,
            batch_size: 32,
            batch_mode: BatchMode::Poisson,
            steps: 60,
            eval_every: Some(20),
            seed: 1,
        }
    }

    #[test]
    fn selected_update_touches_only_selected() {
        let model = Model::new(spec(), 0).unwrap();
        let sel = IndexMask::new(model.layout(), vec![1, 5]).unwrap();
        let mut p = model.params().to_vec();
        apply_selected_update(&mut p, &sel, &[1.0, -2.0]).unwrap();
        for (i, (a, b)) in p.iter().zip(model.params()).enumerate() {
            match i {
                1 => assert_eq!(*a, b + 1.0),
                5 => assert_eq!(*a, b - 2.0),
                _ => assert_eq!(a.to_bits(), b.to_bits()),
            }
        }
        assert!(apply_selected_update(&mut p, &sel, &[1.0]).is_err());
        let rest = IndexMask::full(model.layout()).difference(&sel).unwrap();
        freeze_complement(model.params(), &p, &rest).unwrap();
        assert!(freeze_complement(model.params(), &p, &IndexMask::full(model.layout())).is_err());
    }

    #[test]
    fn evaluate_counts_correct_rows() {
        // Identity logits: the prediction is the largest input coordinate.
        let spec = ModelSpec {
            input_shape: vec![2],
            layers: vec![LayerSpec::FullyConnected {
                out_features: 2,
                in_features: 2,
                bias: false,
            }],
        };
        let model = Model::with_params(spec, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Tensor::new(vec![4, 2], vec![1.0, 0.0, 0.0, 1.0, 2.0, 1.0, 0.0, 3.0]).unwrap();
        let ds = Dataset::new(x, vec![0, 1, 1, 1], 2, crate::data::Split::Test).unwrap();
        assert_eq!(evaluate(&model, &ds).unwrap(), 0.75);
    }

    #[test]
    fn private_run_learns_blobs_within_budget() {
        let data = synth_blobs(3, 200, 4, 0).unwrap();
        let out = dp_ssgd_train(
            &config(),
            Model::new(spec(), 1).unwrap(),
            &data,
            None,
            Some(&data),
        )
        .unwrap();
        assert!(out.epsilon <= 3.0 + 1e-6, "eps {}", out.epsilon);
        assert_eq!(out.state.metrics.len(), 3);
        let last = out.state.metrics.last().unwrap();
        assert!(last.test_acc > 0.9, "acc {}", last.test_acc);
        for w in out.state.metrics.windows(2) {
            assert!(w[1].eps_so_far >= w[0].eps_so_far);
        }
    }

    #[test]
    fn pre_pruned_weights_stay_zero() {
        let data = synth_blobs(3, 50, 4, 0).unwrap();
        let mut cfg = config();
        cfg.prune = PruneSpec {
            criterion: PruneCriterion::Random,
            rate: 0.5,
            ..PruneSpec::default()
        };
        cfg.drop = DropPolicy::new(DropCriterion::Magnitude, 0.5).unwrap();
        let out = dp_ssgd_train(&cfg, Model::new(spec(), 1).unwrap(), &data, None, None).unwrap();
        assert_eq!(out.state.pre_pruned.len(), 16 + 12);
        for &i in out.state.pre_pruned.indices() {
            assert_eq!(out.state.model.params()[i].to_bits(), 0.0f64.to_bits());
        }
    }

    #[test]
    fn dp_snip_budget_is_charged() {
        let data = synth_blobs(3, 50, 4, 0).unwrap();
        let mut cfg = config();
        cfg.prune = PruneSpec {
            criterion: PruneCriterion::DpSnip,
            rate: 0.0,
            epsilon: 0.3,
            ..PruneSpec::default()
        };
        let out = dp_ssgd_train(&cfg, Model::new(spec(), 1).unwrap(), &data, None, None).unwrap();
        assert_eq!(out.state.eps_pp, 0.3);
        assert!(out.epsilon <= 3.0 + 1e-6 && out.epsilon > 2.9);
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let data = synth_blobs(3, 50, 4, 0).unwrap();
        let mut cfg = config();
        cfg.drop = DropPolicy::new(DropCriterion::Random, 0.5).unwrap();
        let full = dp_ssgd_train(&cfg, Model::new(spec(), 1).unwrap(), &data, None, None).unwrap();

        let mut first = Trainer::new(
            cfg.clone(),
            Model::new(spec(), 1).unwrap(),
            &data,
            None,
            None,
        )
        .unwrap();
        for _ in 0..25 {
            first.step().unwrap();
        }
        let ck = first.checkpoint(None);
        let mut second = Trainer::resume(cfg, &ck, &data, None).unwrap();
        second.run().unwrap();
        assert_eq!(second.state.model.params(), full.state.model.params());
        assert_eq!(second.epsilon().unwrap(), full.epsilon);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = config();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = config();
        cfg.noise = NoiseSpec::Sigma(-1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = config();
        cfg.noise = NoiseSpec::Budget { epsilon: 1e-9 };
        cfg.steps = 100_000;
        let data = synth_blobs(3, 50, 4, 0).unwrap();
        assert!(Trainer::new(cfg, Model::new(spec(), 1).unwrap(), &data, None, None).is_err());
    }
}
