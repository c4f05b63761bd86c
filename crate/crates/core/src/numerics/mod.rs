//! Dense tensors and reverse-mode differentiation.

mod graph;
pub mod ops;
mod scalar;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use ops::{add, add_broadcast, concat, gelu, layer_norm, log_softmax, matmul, mul, narrow, permute, softmax};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape { op: &'static str, shape: Vec<usize>, reason: String },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("{op}: produced a NaN or infinite value")]
    NonFinite { op: &'static str },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
}

#[cfg(test)]
mod tests;
