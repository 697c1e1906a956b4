//! Differentially private sparse SGD.
//!
//! A model is pre-pruned once before training (randomly, by Synflow, or by a
//! private SNIP query), and at every step only a subset of the surviving
//! weights is updated with a clipped, noised gradient. A Rényi-DP accountant
//! calibrates the noise and tracks the spent budget.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod graddrop;
pub mod mask;
pub mod mechanisms;
pub mod prepruning;
pub mod privacy;
pub mod rng;
pub mod trainer;

pub use autodiff::{Model, ModelSpec, Tensor};
pub use error::{DpError, Result};
pub use mask::IndexMask;
pub use trainer::{dp_ssgd_train, evaluate, TrainConfig, TrainState, Trainer};
