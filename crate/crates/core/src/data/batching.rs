use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// Each example joins each batch independently with probability `q`.
    #[default]
    Poisson,
    /// Shuffled fixed-size batches, reshuffled every epoch.
    Fixed,
}

/// Source of per-step example indices. `batch(step)` is a pure function of
/// the sampler's seed and the step, so runs can resume mid-stream.
pub trait BatchSampler {
    fn batch(&self, step: u64) -> Vec<usize>;
}

#[derive(Debug, Clone)]
pub struct PoissonBatches {
    n: usize,
    q: f64,
    seed: u64,
}

impl PoissonBatches {
    pub fn new(n: usize, q: f64, seed: u64) -> Self {
        assert!(q > 0.0 && q <= 1.0, "sampling rate must be in (0, 1]");
        Self { n, q, seed }
    }
}

impl BatchSampler for PoissonBatches {
    fn batch(&self, step: u64) -> Vec<usize> {
        if self.q >= 1.0 {
            return (0..self.n).collect();
        }
        let mut rng = rng::stream(self.seed, Purpose::Batch, step);
        (0..self.n).filter(|_| rng.gen::<f64>() < self.q).collect()
    }
}

/// Endless stream of Poisson-subsampled batches starting at step 0.
pub fn poisson_batches(n: usize, q: f64, seed: u64) -> impl Iterator<Item = Vec<usize>> {
    let sampler = PoissonBatches::new(n, q, seed);
    (0..).map(move |step| sampler.batch(step))
}

#[derive(Debug, Clone)]
pub struct FixedBatches {
    n: usize,
    batch_size: usize,
    seed: u64,
}

impl FixedBatches {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        assert!(
            batch_size >= 1 && batch_size <= n,
            "batch size must be in 1..=n"
        );
        Self {
            n,
            batch_size,
            seed,
        }
    }

    fn per_epoch(&self) -> u64 {
        (self.n / self.batch_size) as u64
    }
}

impl BatchSampler for FixedBatches {
    fn batch(&self, step: u64) -> Vec<usize> {
        let epoch = step / self.per_epoch();
        let k = (step % self.per_epoch()) as usize;
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut rng::stream(self.seed, Purpose::Batch, epoch));
        order[k * self.batch_size..(k + 1) * self.batch_size].to_vec()
    }
}
