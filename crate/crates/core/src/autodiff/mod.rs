//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! The graph is rebuilt for every sample: each operation evaluates eagerly
//! and records its inputs, and [`Graph::backward`] walks the records in
//! reverse. Only the handful of operations the behaviour model needs are
//! provided.

mod gemm;
mod gradcheck;
mod graph;
mod tensor;

use thiserror::Error;

pub(crate) use gemm::{gemm, MatMut, MatRef};
pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, Var, NORM_EPS};
pub use tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate input: column {column} has norm {norm:e}")]
    Degenerate { column: usize, norm: f64 },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("usage error: {0}")]
    Usage(String),
}
