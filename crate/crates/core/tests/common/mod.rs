//! Oracles shared by the integration tests. Each one recomputes a quantity
//! by a route that does not go through the code under test.

#![allow(dead_code)]

use dpssgd::autodiff::{LayerSpec, ModelSpec, Tensor};
use dpssgd::data::{BatchSampler, Dataset, PoissonBatches};
use dpssgd::mask::count_at_rate;
use dpssgd::Model;
use rand::Rng;

/// A small random architecture that always contains every layer kind:
/// conv, relu, mean pool, flatten and fully connected.
pub fn random_spec<R: Rng>(rng: &mut R) -> ModelSpec {
    let c = rng.gen_range(1..=2);
    let oc = rng.gen_range(1..=3);
    let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (ph, pw) = (rng.gen_range(2..=3), rng.gen_range(2..=3));
    let second = rng.gen_bool(0.5);
    let extra = usize::from(second);
    let (mut hh, mut ww) = (2 * ph, 2 * pw);
    let h = hh + extra + kh - 1;
    let w = ww + extra + kw - 1;
    let mut layers = vec![LayerSpec::Conv2d {
        out_channels: oc,
        in_channels: c,
        kernel_h: kh,
        kernel_w: kw,
        bias: rng.gen_bool(0.5),
    }];
    let mut ch = oc;
    layers.push(LayerSpec::Relu);
    if second {
        let oc2 = rng.gen_range(1..=2);
        layers.push(LayerSpec::Conv2d {
            out_channels: oc2,
            in_channels: ch,
            kernel_h: 2,
            kernel_w: 2,
            bias: rng.gen_bool(0.5),
        });
        ch = oc2;
    }
    layers.push(LayerSpec::MeanPool { size: 2 });
    hh /= 2;
    ww /= 2;
    layers.push(LayerSpec::Flatten);
    let flat = ch * hh * ww;
    let hidden = rng.gen_range(2..=5);
    let classes = rng.gen_range(2..=4);
    layers.push(LayerSpec::FullyConnected {
        out_features: hidden,
        in_features: flat,
        bias: rng.gen_bool(0.5),
    });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::FullyConnected {
        out_features: classes,
        in_features: hidden,
        bias: true,
    });
    ModelSpec {
        input_shape: vec![c, h, w],
        layers,
    }
}

/// Random inputs and labels matching `model`.
pub fn random_batch<R: Rng>(model: &Model, n: usize, rng: &mut R) -> (Tensor, Vec<usize>) {
    let d: usize = model.input_shape().iter().product();
    let mut shape = vec![n];
    shape.extend_from_slice(model.input_shape());
    let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels = (0..n)
        .map(|_| rng.gen_range(0..model.num_classes()))
        .collect();
    (Tensor::new(shape, data).unwrap(), labels)
}

/// Central finite-difference gradient of one sample's loss, using only the
/// forward pass.
pub fn fd_gradient(model: &Model, x: &Tensor, label: usize, h: f64) -> Vec<f64> {
    let loss = |p: &[f64]| {
        let m = Model::with_params(model.spec().clone(), p.to_vec()).unwrap();
        m.mean_loss(x, &[label]).unwrap()
    };
    let mut p = model.params().to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = loss(&p);
            p[i] = orig - h;
            let down = loss(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`, maximized over coordinates.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Plain minibatch SGD: `θ ← θ - (η/B) Σ_b ∇ℓ_b`, no clipping, masking or
/// noise, batches drawn from the same Poisson sampler.
pub fn plain_sgd(
    model: &Model,
    data: &Dataset,
    eta: f64,
    batch_size: usize,
    steps: u64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let q = batch_size as f64 / data.len() as f64;
    let sampler = PoissonBatches::new(data.len(), q, seed);
    let mut params = model.params().to_vec();
    let mut trajectory = Vec::new();
    for t in 0..steps {
        let rows = sampler.batch(t);
        let m = Model::with_params(model.spec().clone(), params.clone()).unwrap();
        let mut sum = vec![0.0; params.len()];
        for &r in &rows {
            let (x, y) = data.batch(&[r]);
            let g = m.per_sample_gradients(&x, &y, &m.full_mask()).unwrap();
            for (s, v) in sum.iter_mut().zip(g.row(0)) {
                *s += v;
            }
        }
        let scale = eta / batch_size as f64;
        for (p, s) in params.iter_mut().zip(&sum) {
            *p -= scale * s;
        }
        trajectory.push(params.clone());
    }
    trajectory
}

/// Total synaptic flow `1ᵀ |W_L| ... |W_1| 1` from a forward pass with absolute
/// weights, zero biases and an all-ones input.
fn synaptic_flow(spec: &ModelSpec, abs_weights: &[f64]) -> f64 {
    let m = Model::with_params(spec.clone(), abs_weights.to_vec()).unwrap();
    let d: usize = spec.input_shape.iter().product();
    let mut shape = vec![1];
    shape.extend_from_slice(&spec.input_shape);
    let x = Tensor::new(shape, vec![1.0; d]).unwrap();
    m.forward(&x).unwrap().data().iter().sum()
}

/// Synflow scores by deletion: the flow is linear in each single weight, so
/// `w_j ∂R/∂w_j = R(w) - R(w with w_j = 0)`. Biases score 0.
pub fn synflow_scores_by_deletion(model: &Model, removed: &[bool]) -> Vec<f64> {
    let layout = model.layout();
    let mut abs: Vec<f64> = (0..model.num_params())
        .map(|i| {
            if layout.is_prunable(i) && !removed[i] {
                model.params()[i].abs()
            } else {
                0.0
            }
        })
        .collect();
    let total = synaptic_flow(model.spec(), &abs);
    (0..abs.len())
        .map(|j| {
            if !layout.is_prunable(j) {
                return 0.0;
            }
            let w = abs[j];
            abs[j] = 0.0;
            let without = synaptic_flow(model.spec(), &abs);
            abs[j] = w;
            total - without
        })
        .collect()
}

/// Iterative score-sort-prune with the exponential keep schedule.
pub fn synflow_oracle(model: &Model, rate: f64, rounds: usize) -> Vec<usize> {
    let layout = model.layout();
    let prunable = layout.prunable_ids();
    let n = prunable.len();
    let mut removed = vec![false; model.num_params()];
    let mut count = 0;
    for r in 1..=rounds {
        let target = if r == rounds {
            count_at_rate(rate, n)
        } else {
            count_at_rate(1.0 - (1.0 - rate).powf(r as f64 / rounds as f64), n)
        };
        count = count.max(target);
        let s = synflow_scores_by_deletion(model, &removed);
        let mut order = prunable.clone();
        order.sort_by(|&a, &b| {
            removed[b]
                .cmp(&removed[a])
                .then(s[a].partial_cmp(&s[b]).unwrap())
                .then(a.cmp(&b))
        });
        removed.iter_mut().for_each(|x| *x = false);
        for &i in &order[..count] {
            removed[i] = true;
        }
    }
    prunable.into_iter().filter(|&i| removed[i]).collect()
}

/// Non-private SNIP: rank `|θ_j ∂L/∂θ_j|` of the mean loss over the batch,
/// with the gradient taken through the batched backward pass.
pub fn snip_oracle(model: &Model, data: &Dataset, rate: f64) -> Vec<usize> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let (x, y) = data.batch(&rows);
    let (grad, _) = model.batch_loss_gradient(&x, &y).unwrap();
    let ids = model.layout().prunable_ids();
    let sens: Vec<f64> = ids
        .iter()
        .map(|&i| (model.params()[i] * grad[i] / data.len() as f64).abs())
        .collect();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| sens[a].partial_cmp(&sens[b]).unwrap().then(a.cmp(&b)));
    let mut out: Vec<usize> = order[..count_at_rate(rate, ids.len())]
        .iter()
        .map(|&j| ids[j])
        .collect();
    out.sort_unstable();
    out
}

/// `ln A_α` of the subsampled Gaussian by the trapezoid rule in log space,
/// with `A_α = E_{z~N(0,σ²)}[((1-q) + q e^{(2z-1)/(2σ²)})^α]`.
pub fn rdp_trapezoid(sigma: f64, q: f64, alpha: f64) -> f64 {
    let s2 = sigma * sigma;
    let lo = -20.0 * sigma - 2.0;
    let hi = alpha + 20.0 * sigma + 2.0;
    let n = 400_000usize;
    let h = (hi - lo) / n as f64;
    let ln_pdf = |z: f64| -z * z / (2.0 * s2) - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let terms: Vec<f64> = (0..=n)
        .map(|i| {
            let z = lo + i as f64 * h;
            let a = (1.0 - q).ln();
            let b = q.ln() + (2.0 * z - 1.0) / (2.0 * s2);
            let m = a.max(b);
            let ln_mix = m + ((a - m).exp() + (b - m).exp()).ln();
            ln_pdf(z) + alpha * ln_mix
        })
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms
        .iter()
        .enumerate()
        .map(|(i, t)| if i == 0 || i == n { 0.5 } else { 1.0 } * (t - max).exp())
        .sum();
    (max + (sum * h).ln()) / (alpha - 1.0)
}

/// Analytic Gaussian mechanism bound `σ = √(2 ln(1.25/δ)) / ε` (for ε ≤ 1).
pub fn classical_gaussian_sigma(eps: f64, delta: f64) -> f64 {
    (2.0 * (1.25 / delta).ln()).sqrt() / eps
}
