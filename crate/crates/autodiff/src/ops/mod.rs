//! Differentiable operations. Tensors are row-major; batched layouts put
//! the batch axis first (`[N, C, H, W]` for images, `[N, C, L]` for 1-D
//! signals, `[N, T, D]` for sequences).

mod conv;
mod elementwise;
mod linalg;
mod loss;
mod norm;
mod pool;
mod reduce;
mod shape;

pub use conv::{conv1d, conv2d};
pub use elementwise::{
    add, channel_scale, dropout, log_clamp, mul, relu, scale, sigmoid, softmax, sub, tanh,
};
pub use linalg::{bmm, linear, matmul};
pub use loss::bce_with_logits;
pub use norm::{batch_norm, layer_norm, BatchNormStats};
pub use pool::{max_pool1d, max_pool2d};
pub use reduce::{max_axis, mean, mean_axis, sum};
pub use shape::{concat, narrow, permute, reshape, select, stack};

/// Splits `shape` around `axis` into `(outer, len, inner)` extents.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
