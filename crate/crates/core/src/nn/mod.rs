//! Convolution and dense kernels with analytic gradients.
//!
//! Samples flow through a [`Network`] one at a time as `[channels, height,
//! width]` or flat `[n]` tensors; mini-batches are formed by accumulating
//! per-sample gradients with [`accumulate_batch`].

mod checkpoint;
mod layer;
mod loss;
mod network;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layer::{Conv2d, Dense, Layer, LayerKind};
pub use loss::{mse, softmax, softmax_cross_entropy};
pub use network::{accumulate_batch, Grads, Network, NetworkBuilder, ParamGrad, Trace};
pub use optim::{sgd_step, sgd_step_layered, Adam, LayerRate};
pub use tensor::Tensor;
