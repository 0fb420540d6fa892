//! Dense tensors, reverse-mode autodiff, and the optimizer shared by every
//! trainer in the crate.
//!
//! Everything is 64-bit floats and single-threaded: a seeded run produces
//! bit-identical results, and every differentiable operation is covered by
//! [`gradcheck`] against central differences.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_many};
pub use graph::{Gradients, Graph, Var, IGNORE_INDEX};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamManifestEntry, ParamSet};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("undefined loss: every position is ignored")]
    UndefinedLoss,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}
