use crate::autodiff::Tensor;
use crate::error::{DpError, Result};

/// Per-sample softmax cross-entropy losses for a `(B, K)` logits tensor.
pub fn loss_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    if logits.shape().len() != 2 {
        return Err(DpError::config(format!(
            "logits must be (batch, classes), got {:?}",
            logits.shape()
        )));
    }
    if logits.batch_len() != labels.len() {
        return Err(DpError::config(format!(
            "{} logit rows but {} labels",
            logits.batch_len(),
            labels.len()
        )));
    }
    (0..labels.len())
        .map(|b| sample_cross_entropy(logits.item(b), labels[b]))
        .collect()
}

pub(crate) fn sample_cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    check_label(label, logits.len())?;
    let target = logits[label];
    if logits.iter().all(|&z| z <= target) {
        // Confident prediction: ln(1 + Σ_{k≠y} e^{z_k - z_y}) keeps tiny losses.
        let rest: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != label)
            .map(|(_, &z)| (z - target).exp())
            .sum();
        return Ok(rest.ln_1p());
    }
    // lse >= every logit, so the loss is nonnegative up to rounding.
    Ok((log_sum_exp(logits) - target).max(0.0))
}

/// Loss and its gradient with respect to the logits (`softmax - onehot`).
pub(crate) fn cross_entropy_with_grad(
    logits: &[f64],
    label: usize,
    grad: &mut [f64],
) -> Result<f64> {
    check_label(label, logits.len())?;
    let lse = log_sum_exp(logits);
    for (g, &z) in grad.iter_mut().zip(logits) {
        *g = (z - lse).exp();
    }
    grad[label] -= 1.0;
    sample_cross_entropy(logits, label)
}

fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(DpError::Data(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    Ok(())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        for k in [2usize, 3, 10] {
            let logits = Tensor::new(vec![2, k], vec![0.7; 2 * k]).unwrap();
            let losses = loss_cross_entropy(&logits, &[0, k - 1]).unwrap();
            for l in losses {
                assert!((l - (k as f64).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_vanishes_with_margin() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 10.0, 100.0, 700.0] {
            let logits = Tensor::new(vec![1, 3], vec![margin, 0.0, 0.0]).unwrap();
            let l = loss_cross_entropy(&logits, &[0]).unwrap()[0];
            assert!(l >= 0.0 && l < prev);
            prev = l;
        }
        assert!(prev > 0.0 && prev < 1e-12);
    }

    #[test]
    fn matches_direct_softmax_formula() {
        let data: Vec<f64> = (0..12).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let labels = [1, 3, 0];
        let logits = Tensor::new(vec![3, 4], data.clone()).unwrap();
        let losses = loss_cross_entropy(&logits, &labels).unwrap();
        for b in 0..3 {
            let row = &data[b * 4..(b + 1) * 4];
            let denom: f64 = row.iter().map(|z| z.exp()).sum();
            let expected = -(row[labels[b]].exp() / denom).ln();
            assert!((losses[b] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range_is_data_error() {
        let logits = Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(matches!(
            loss_cross_entropy(&logits, &[3]),
            Err(DpError::Data(_))
        ));
        assert!(matches!(
            loss_cross_entropy(&logits, &[0, 1]),
            Err(DpError::Config(_))
        ));
    }
}
