//! Seeded random streams.
//!
//! Every random decision in a run draws from a ChaCha stream keyed by the run
//! seed and addressed by `(purpose, index)`. Streams for different steps or
//! purposes never overlap, so a step's noise does not depend on how many
//! values earlier steps consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// What a random stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Batch = 2,
    GradDrop = 3,
    Noise = 4,
    PrePrune = 5,
    PruneNoise = 6,
    Data = 7,
}

const INDEX_BITS: u32 = 56;

/// Stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha20Rng {
    assert!(index < (1 << INDEX_BITS), "stream index out of range");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << INDEX_BITS) | index);
    rng
}

/// Standard normal sampler using the Box–Muller transform.
///
/// Each pair of uniforms yields two independent normals; the second is cached.
#[derive(Debug, Clone)]
pub struct BoxMuller<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> BoxMuller<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.sample();
        }
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}
