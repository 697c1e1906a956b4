//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Tracks `ε(α)` on a fixed grid of orders, converts to `(ε, δ)`, calibrates
//! the noise multiplier for a target budget, and splits a total budget
//! between pre-pruning and training.

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::prepruning::PruneCriterion;

/// Default Rényi orders: 1.25, 1.5, ..., 10, then 11, 12, ..., 64, then a
/// sparse tail up to 1024 for small budgets.
pub fn default_orders() -> Vec<f64> {
    let dense = (5..=40).map(|i| i as f64 * 0.25);
    let coarse = (11..=64).map(|i| i as f64);
    let tail = [80.0, 96.0, 128.0, 192.0, 256.0, 384.0, 512.0, 768.0, 1024.0];
    dense.chain(coarse).chain(tail).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let b = Self { epsilon, delta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(DpError::config(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        check_delta(self.delta)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DpError::config(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    Ok(())
}

fn check_mechanism(sigma: f64, q: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(DpError::config(format!(
            "noise multiplier must be > 0, got {sigma}"
        )));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(DpError::config(format!(
            "sampling rate must be in (0, 1], got {q}"
        )));
    }
    Ok(())
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    // Summed logs stay within ~1e-13 relative for the orders on the grid.
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// `ln A_α` for integer `α` via the binomial expansion
/// `A_α = Σ_k C(α, k) (1-q)^(α-k) q^k exp((k² - k) / (2σ²))`.
fn log_a_integer(sigma: f64, q: f64, alpha: u64) -> f64 {
    let (ln_q, ln_1mq) = (q.ln(), (-q).ln_1p());
    let s2 = sigma * sigma;
    (0..=alpha).fold(f64::NEG_INFINITY, |acc, k| {
        let kf = k as f64;
        let term = ln_binomial(alpha, k)
            + (alpha - k) as f64 * ln_1mq
            + kf * ln_q
            + (kf * kf - kf) / (2.0 * s2);
        log_add(acc, term)
    })
}

/// `ln A_α` by composite Simpson quadrature of
/// `∫ N(z; 0, σ²) ((1-q) + q·exp((2z-1)/(2σ²)))^α dz`, evaluated in log space.
fn log_a_quadrature(sigma: f64, q: f64, alpha: f64) -> f64 {
    let s2 = sigma * sigma;
    let (ln_q, ln_1mq) = (q.ln(), (-q).ln_1p());
    let lo = -12.0 * sigma - 1.0;
    let hi = alpha + 12.0 * sigma + 1.0;
    let target_step = sigma / 50.0;
    let mut n = (((hi - lo) / target_step).ceil() as usize).clamp(2_000, 400_000);
    n += n % 2;
    let h = (hi - lo) / n as f64;
    let ln_norm = -0.5 * (std::f64::consts::TAU * s2).ln();
    let log_f = |z: f64| {
        let ln_ratio = (2.0 * z - 1.0) / (2.0 * s2);
        ln_norm - z * z / (2.0 * s2) + alpha * log_add(ln_1mq, ln_q + ln_ratio)
    };
    let values: Vec<f64> = (0..=n).map(|i| log_f(lo + i as f64 * h)).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * (v - max).exp()
        })
        .sum();
    max + (sum * h / 3.0).ln()
}

/// Per-step Rényi divergence `ε(α)` of the Poisson-subsampled Gaussian
/// mechanism with noise multiplier `sigma` and sampling rate `q`.
pub fn rdp_step(sigma: f64, q: f64, alpha: f64) -> Result<f64> {
    check_mechanism(sigma, q)?;
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(DpError::config(format!(
            "Rényi order must be > 1, got {alpha}"
        )));
    }
    let full = alpha / (2.0 * sigma * sigma);
    if q == 1.0 {
        return Ok(full);
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_integer(sigma, q, alpha as u64)
    } else {
        log_a_quadrature(sigma, q, alpha)
    };
    Ok((log_a / (alpha - 1.0)).clamp(0.0, full))
}

/// Smallest `ε` over the order grid for the given accumulated RDP values.
///
/// Uses `ε = ε(α) + ln((α-1)/α) - (ln δ + ln α)/(α-1)`, which is never larger
/// than the basic `ε(α) + ln(1/δ)/(α-1)` conversion.
pub fn rdp_to_epsilon(orders: &[f64], rdp: &[f64], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if orders.is_empty() {
        return Err(DpError::config("empty Rényi order grid"));
    }
    let ln_delta = delta.ln();
    let eps = orders
        .iter()
        .zip(rdp)
        .map(|(&a, &r)| r + ((a - 1.0) / a).ln() - (ln_delta + a.ln()) / (a - 1.0))
        .fold(f64::INFINITY, f64::min);
    Ok(eps.max(0.0))
}

/// Accumulated privacy loss of repeated subsampled Gaussian queries with a
/// fixed `(q, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountantState {
    orders: Vec<f64>,
    rdp_eps: Vec<f64>,
    per_step: Vec<f64>,
    steps: u64,
    q: f64,
    sigma: f64,
}

impl AccountantState {
    pub fn new(q: f64, sigma: f64) -> Result<Self> {
        Self::with_orders(q, sigma, default_orders())
    }

    pub fn with_orders(q: f64, sigma: f64, orders: Vec<f64>) -> Result<Self> {
        check_mechanism(sigma, q)?;
        if orders.is_empty() {
            return Err(DpError::config("empty Rényi order grid"));
        }
        let per_step = orders
            .iter()
            .map(|&a| rdp_step(sigma, q, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rdp_eps: vec![0.0; orders.len()],
            orders,
            per_step,
            steps: 0,
            q,
            sigma,
        })
    }

    /// Restores a state from its stored parts (e.g. a checkpoint).
    pub fn from_parts(q: f64, sigma: f64, orders: Vec<f64>, steps: u64) -> Result<Self> {
        Self::with_orders(q, sigma, orders).map(|s| s.compose(steps))
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn rdp_eps(&self) -> &[f64] {
        &self.rdp_eps
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// State after `n_steps` more queries: `ε(α) = steps · ε_step(α)`.
    pub fn compose(&self, n_steps: u64) -> Self {
        let steps = self.steps + n_steps;
        Self {
            rdp_eps: self.per_step.iter().map(|&e| e * steps as f64).collect(),
            steps,
            ..self.clone()
        }
    }

    pub fn step(&mut self) {
        *self = self.compose(1);
    }

    pub fn to_eps_delta(&self, delta: f64) -> Result<f64> {
        rdp_to_epsilon(&self.orders, &self.rdp_eps, delta)
    }
}

/// `ε` spent by `n_steps` queries at `(q, σ)`.
pub fn epsilon_for(sigma: f64, q: f64, n_steps: u64, delta: f64) -> Result<f64> {
    AccountantState::new(q, sigma)?
        .compose(n_steps)
        .to_eps_delta(delta)
}

const SIGMA_MIN: f64 = 1e-2;
const SIGMA_MAX: f64 = 1e4;

/// Smallest noise multiplier (to 1e-4 relative) that keeps `n_steps`
/// subsampled Gaussian queries within `target`.
pub fn calibrate_sigma(target: PrivacyBudget, q: f64, n_steps: u64) -> Result<f64> {
    target.validate()?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(DpError::config(format!(
            "sampling rate must be in (0, 1], got {q}"
        )));
    }
    if n_steps == 0 {
        return Err(DpError::config("cannot calibrate for zero steps"));
    }
    let eps = |sigma: f64| epsilon_for(sigma, q, n_steps, target.delta);
    let mut hi = SIGMA_MAX;
    let reachable = eps(hi)?;
    if reachable > target.epsilon {
        return Err(DpError::Calibration(format!(
            "ε = {} unreachable for δ = {}, q = {q}, {n_steps} steps (ε ≥ {reachable} at σ = {hi})",
            target.epsilon, target.delta
        )));
    }
    let mut lo = SIGMA_MIN;
    if eps(lo)? <= target.epsilon {
        return Ok(lo);
    }
    // Invariant: eps(lo) > target >= eps(hi).
    while (hi - lo) > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        if eps(mid)? <= target.epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Division of a total `ε` between pre-pruning and training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSplit {
    pub eps_pp: f64,
    pub eps_gd: f64,
}

/// Only DP-SNIP touches data before training, so only DP-SNIP takes a share.
pub fn split_budget(
    total: PrivacyBudget,
    criterion: PruneCriterion,
    eps_pp: f64,
) -> Result<BudgetSplit> {
    total.validate()?;
    if criterion != PruneCriterion::DpSnip {
        return Ok(BudgetSplit {
            eps_pp: 0.0,
            eps_gd: total.epsilon,
        });
    }
    if !(eps_pp >= 0.0) || eps_pp >= total.epsilon {
        return Err(DpError::config(format!(
            "pre-pruning budget {eps_pp} must be in [0, {})",
            total.epsilon
        )));
    }
    Ok(BudgetSplit {
        eps_pp,
        eps_gd: total.epsilon - eps_pp,
    })
}
