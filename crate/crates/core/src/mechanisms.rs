//! Masked per-sample clipping and the Gaussian mechanism over the selected
//! coordinates.

use rand::Rng;
use rayon::prelude::*;

use crate::autodiff::PerSampleGrads;
use crate::error::{DpError, Result};
use crate::rng::BoxMuller;

/// Per-sample L2 clip norm `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipParams {
    c: f64,
}

impl ClipParams {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0) || c.is_nan() {
            return Err(DpError::config(format!("clip norm must be > 0, got {c}")));
        }
        Ok(Self { c })
    }

    pub fn norm(&self) -> f64 {
        self.c
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales each row `g` to `g / max(1, ‖g‖ / C)`. Rows already within the
/// bound are left untouched.
pub fn clip_per_sample(mut grads: PerSampleGrads, clip: ClipParams) -> PerSampleGrads {
    let c = clip.norm();
    grads.rows_mut().into_par_iter().for_each(|row| {
        let norm = l2_norm(row);
        if norm > c {
            let scale = norm / c;
            for v in row.iter_mut() {
                *v /= scale;
            }
        }
    });
    grads
}

/// `Σ_b row_b + z` with `z ~ N(0, σ²C² I)` over the selected columns only.
///
/// With `sigma == 0` no noise is drawn and the plain row sum is returned.
pub fn noisy_sum<R: Rng>(
    grads: &PerSampleGrads,
    sigma: f64,
    clip: ClipParams,
    rng: R,
) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(DpError::config(format!(
            "noise multiplier must be >= 0, got {sigma}"
        )));
    }
    let mut sum = vec![0.0; grads.num_columns()];
    for row in grads.rows() {
        for (s, g) in sum.iter_mut().zip(row) {
            *s += g;
        }
    }
    if sigma > 0.0 {
        let std = sigma * clip.norm();
        let mut normal = BoxMuller::new(rng);
        for s in sum.iter_mut() {
            *s += std * normal.sample();
        }
    }
    Ok(sum)
}

/// Parameter delta `-(η / B) · noisy_sum` over the selected coordinates.
pub fn dp_mean_update(noisy_sum: &[f64], batch_size: usize, eta: f64) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(DpError::config("batch size must be >= 1"));
    }
    let scale = -(eta / batch_size as f64);
    Ok(noisy_sum.iter().map(|s| scale * s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{LayerSpec, ModelSpec, ParamLayout};
    use crate::mask::IndexMask;
    use crate::rng::{stream, Purpose};
    use std::sync::Arc;

    fn grads(rows: &[Vec<f64>]) -> PerSampleGrads {
        let k = rows[0].len();
        let layout = Arc::new(ParamLayout::new(&ModelSpec {
            input_shape: vec![k],
            layers: vec![LayerSpec::FullyConnected {
                out_features: 2,
                in_features: k,
                bias: false,
            }],
        }));
        let mask = IndexMask::new(&layout, (0..k).collect()).unwrap();
        PerSampleGrads::new(rows.len(), rows.concat(), mask).unwrap()
    }

    #[test]
    fn clip_scales_long_rows_only() {
        let g = grads(&[vec![6.0, 8.0], vec![0.3, 0.4]]);
        let c = clip_per_sample(g, ClipParams::new(1.0).unwrap());
        assert!((l2_norm(c.row(0)) - 1.0).abs() < 1e-15);
        assert_eq!(c.row(0), &[0.6, 0.8]);
        assert_eq!(c.row(1), &[0.3, 0.4]);
    }

    #[test]
    fn zero_rows_pass_through() {
        let c = clip_per_sample(grads(&[vec![0.0, 0.0]]), ClipParams::new(0.5).unwrap());
        assert_eq!(c.row(0), &[0.0, 0.0]);
        assert!(ClipParams::new(0.0).is_err());
    }

    #[test]
    fn zero_noise_is_exact_sum() {
        let g = grads(&[vec![0.1, 0.2, 0.3], vec![0.4, -0.5, 0.6]]);
        let s = noisy_sum(
            &g,
            0.0,
            ClipParams::new(1.0).unwrap(),
            stream(0, Purpose::Noise, 0),
        )
        .unwrap();
        assert_eq!(s, vec![0.1 + 0.4, 0.2 - 0.5, 0.3 + 0.6]);
        assert!(noisy_sum(
            &g,
            -1.0,
            ClipParams::new(1.0).unwrap(),
            stream(0, Purpose::Noise, 0)
        )
        .is_err());
    }

    #[test]
    fn seeded_noise_equals_seeded_draw() {
        let g = grads(&[vec![0.0; 4]]);
        let clip = ClipParams::new(2.0).unwrap();
        let s = noisy_sum(&g, 1.5, clip, stream(9, Purpose::Noise, 1)).unwrap();
        let mut normal = BoxMuller::new(stream(9, Purpose::Noise, 1));
        let expected: Vec<f64> = (0..4).map(|_| 3.0 * normal.sample()).collect();
        assert_eq!(s, expected);
    }

    #[test]
    fn mean_update_formula() {
        assert_eq!(
            dp_mean_update(&[1.0, -2.0], 4, 0.0).unwrap(),
            vec![-0.0, 0.0]
        );
        assert_eq!(
            dp_mean_update(&[1.0, -2.0], 1, 1.0).unwrap(),
            vec![-1.0, 2.0]
        );
        assert_eq!(dp_mean_update(&[3.0], 3, 0.5).unwrap(), vec![-0.5]);
        assert!(dp_mean_update(&[1.0], 0, 1.0).is_err());
    }
}
