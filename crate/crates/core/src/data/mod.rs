//! Datasets, file-format loaders, and minibatch sampling.

mod batching;
mod cifar;
mod idx;
mod synth;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{DpError, Result};

pub use batching::{poisson_batches, BatchMode, BatchSampler, FixedBatches, PoissonBatches};
pub use cifar::{encode_cifar10_records, load_cifar10_binary, CIFAR10_RECORD_LEN};
pub use idx::{encode_idx_images, encode_idx_labels, load_mnist_dir, load_mnist_idx};
pub use synth::{synth_blobs, synth_blobs_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Prune,
    Test,
}

/// Per-channel affine normalization `x' = (x - mean[c]) / std[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Channel statistics of a `(N, C, ...)` image tensor.
    pub fn fit(images: &Tensor) -> Self {
        let channels = images.item_shape().first().copied().unwrap_or(1);
        let per_channel = images.item_len() / channels.max(1);
        let mut mean = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        for chunk in images.data().chunks(per_channel.max(1)).enumerate() {
            let c = chunk.0 % channels;
            for &v in chunk.1 {
                mean[c] += v;
                sq[c] += v * v;
            }
        }
        let count = (images.batch_len() * per_channel) as f64;
        let std = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= count;
                let var = (s / count - *m * *m).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn map(&self, images: &mut Tensor, f: impl Fn(f64, f64, f64) -> f64) {
        let channels = self.mean.len();
        let per_channel = images.item_len() / channels;
        for (i, chunk) in images.data_mut().chunks_mut(per_channel).enumerate() {
            let c = i % channels;
            for v in chunk {
                *v = f(*v, self.mean[c], self.std[c]);
            }
        }
    }

    pub fn apply(&self, images: &mut Tensor) {
        self.map(images, |v, m, s| (v - m) / s);
    }

    pub fn invert(&self, images: &mut Tensor) {
        self.map(images, |v, m, s| v * s + m);
    }
}

/// Labeled examples. `images` is `(N, sample_shape...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
    normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if images.batch_len() == 0 || images.shape().len() < 2 {
            return Err(DpError::Data(
                "dataset must contain at least one example".into(),
            ));
        }
        if images.batch_len() != labels.len() {
            return Err(DpError::Data(format!(
                "{} images but {} labels",
                images.batch_len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DpError::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            split,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn sample_shape(&self) -> &[usize] {
        self.images.item_shape()
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    /// Applies `norm` to the images and records it.
    pub fn normalize(&mut self, norm: Normalization) -> Result<()> {
        if self.normalization.is_some() {
            return Err(DpError::config("dataset is already normalized"));
        }
        let channels = self.sample_shape().first().copied().unwrap_or(1);
        if norm.mean.len() != channels || norm.std.len() != channels {
            return Err(DpError::config(format!(
                "normalization has {} channels, data has {channels}",
                norm.mean.len()
            )));
        }
        norm.apply(&mut self.images);
        self.normalization = Some(norm);
        Ok(())
    }

    /// Images and labels of the given examples.
    pub fn batch(&self, rows: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.images.select(rows),
            rows.iter().map(|&r| self.labels[r]).collect(),
        )
    }

    /// The first `n` examples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Dataset {
        let rows: Vec<usize> = (0..n.min(self.len())).collect();
        let (images, labels) = self.batch(&rows);
        Dataset {
            images,
            labels,
            num_classes: self.num_classes,
            split: self.split,
            normalization: self.normalization.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_invertible() {
        let data: Vec<f64> = (0..2 * 2 * 3).map(|i| (i % 7) as f64 / 7.0).collect();
        let images = Tensor::new(vec![2, 2, 3], data.clone()).unwrap();
        let mut ds = Dataset::new(images, vec![0, 1], 2, Split::Train).unwrap();
        let norm = Normalization::fit(ds.images());
        ds.normalize(norm.clone()).unwrap();
        let mut back = ds.images().clone();
        norm.invert(&mut back);
        for (a, b) in back.data().iter().zip(&data) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(ds.normalize(norm).is_err());
    }

    #[test]
    fn rejects_bad_labels_and_empty() {
        let images = Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            Dataset::new(images.clone(), vec![3], 3, Split::Train),
            Err(DpError::Data(_))
        ));
        assert!(Dataset::new(Tensor::zeros(vec![0, 2]), vec![], 3, Split::Train).is_err());
    }
}
