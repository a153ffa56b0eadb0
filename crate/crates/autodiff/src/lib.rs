//! A small reverse-mode automatic differentiation engine.
//!
//! Values are dense row-major `f32` tensors. Every operation that consumes a
//! tensor requiring gradients records a backward closure; [`Tensor::backward`]
//! walks the recorded graph in reverse topological order and accumulates
//! gradients into leaf tensors.
//!
//! The layer set covers what convolutional music taggers need: 1-D and 2-D
//! convolution, pooling, batch/layer normalization, GRUs, multi-head
//! self-attention, squeeze-and-excitation and a numerically stable binary
//! cross-entropy.

pub mod checkpoint;
mod error;
mod gemm;
pub mod nn;
pub mod ops;
pub mod optim;
mod tensor;

pub use error::{Error, Result};
pub use nn::{Ctx, ParamKind, ParamStore};
pub use optim::{OptimizerConfig, OptimizerState, Phase};
pub use tensor::{is_grad_enabled, no_grad, Tensor};
