//! Dense `f64` tensors, a reverse-mode autodiff tape, Adam, and the binary
//! checkpoint container shared by the rest of the workspace.

pub mod checkpoint;
mod error;
mod graph;
mod optim;
mod params;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use optim::{adam_step, AdamState};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;

/// Numerically stable softmax of a single vector.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    graph::softmax_in_place(&mut v);
    v
}
