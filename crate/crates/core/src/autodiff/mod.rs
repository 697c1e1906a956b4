//! Reverse-mode differentiation for small layered networks.
//!
//! Backpropagation is written out per layer kind rather than through a
//! general tape: each layer provides a forward kernel and a backward kernel
//! that maps the output gradient to input and parameter gradients. Per-sample
//! gradients come from one backward pass per example.

mod layer;
mod loss;
mod model;
mod tensor;

pub use layer::LayerSpec;
pub use loss::loss_cross_entropy;
pub use model::{Model, ModelSpec, ParamBlock, ParamLayout, ParamRole, PerSampleGrads};
pub use tensor::Tensor;
