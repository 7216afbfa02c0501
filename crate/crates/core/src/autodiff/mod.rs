//! Minimal reverse-mode automatic differentiation over dense `f32` tensors.
//!
//! A [`Tape`] owns every value produced during a forward pass. Tapes are not
//! shared between threads; independent tapes can run concurrently.

pub mod gradcheck;
mod linalg;
mod sgd;
mod tape;
mod tensor;

pub use sgd::sgd_step;
pub use tape::{log_softmax_values, BinaryKind, Tape, UnaryKind, Var};
pub use tensor::Tensor;


#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("contract error: {0}")]
    Contract(String),
}

#[cfg(test)]
mod tests;
