//! Dense tensors and reverse-mode differentiation for the model and the
//! lattice computations. Everything is `f64`; there is no broadcasting
//! beyond scalar operands and the explicitly named row/outer ops.

mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use params::{ParamGrads, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Unary, Var};
pub use tensor::{logsumexp, matmul, relu, sigmoid, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} does not support a tensor of shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    Axis {
        op: &'static str,
        shape: Vec<usize>,
        axis: usize,
    },
    #[error("{op}: range {start}..{end} out of bounds for shape {shape:?}")]
    Range {
        op: &'static str,
        shape: Vec<usize>,
        start: usize,
        end: usize,
    },
    #[error("{op}: index out of bounds for shape {shape:?}")]
    Index { op: &'static str, shape: Vec<usize> },
    #[error("{0} needs at least one input")]
    Empty(&'static str),
    #[error("invalid shape {0:?}: extents must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
