use rand::seq::SliceRandom;

use super::{Dataset, Split};
use crate::autodiff::Tensor;
use crate::error::{DpError, Result};
use crate::rng::{self, BoxMuller, Purpose};

/// Gaussian class clusters with centre separation 4 and unit spread.
pub fn synth_blobs(num_classes: usize, per_class: usize, dim: usize, seed: u64) -> Result<Dataset> {
    synth_blobs_with(num_classes, per_class, dim, seed, 4.0, 1.0)
}

/// Gaussian clusters of `per_class` points in `dim` dimensions.
///
/// Class `c` is centred at `margin · e_(c mod dim)` (negated for the second
/// pass when `num_classes > dim`), so with `num_classes ≤ 2·dim` every pair
/// of centres is at least `margin·√2` apart. Rows are shuffled.
pub fn synth_blobs_with(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    seed: u64,
    margin: f64,
    spread: f64,
) -> Result<Dataset> {
    if num_classes < 1 || per_class < 1 || dim < 1 {
        return Err(DpError::config(
            "synth_blobs needs classes, samples and dim >= 1",
        ));
    }
    if num_classes > 2 * dim {
        return Err(DpError::config(format!(
            "{num_classes} classes need dim >= {}",
            num_classes.div_ceil(2)
        )));
    }
    let mut normal = BoxMuller::new(rng::stream(seed, Purpose::Data, 0));
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(num_classes * per_class);
    for c in 0..num_classes {
        let sign = if c < dim { 1.0 } else { -1.0 };
        for _ in 0..per_class {
            let mut x: Vec<f64> = (0..dim).map(|_| spread * normal.sample()).collect();
            x[c % dim] += sign * margin;
            rows.push((x, c));
        }
    }
    rows.shuffle(&mut rng::stream(seed, Purpose::Data, 1));
    let n = rows.len();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (x, c) in rows {
        data.extend(x);
        labels.push(c);
    }
    Dataset::new(
        Tensor::new(vec![n, dim], data)?,
        labels,
        num_classes.max(2),
        Split::Train,
    )
}
