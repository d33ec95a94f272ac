//! Minimal dense/sparse tensor engine with reverse-mode differentiation.
//!
//! Everything is 64-bit and two-dimensional. The [`Tape`] records forward
//! operations and replays them in reverse for exact analytic gradients;
//! [`Adam`]/[`Sgd`] consume those gradients. Dense values live in [`Matrix`],
//! fixed graph structure in [`SparseMatrix`]/[`CsrStructure`].

mod checkpoint;
mod matrix;
mod optim;
mod sparse;
mod tape;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use matrix::Matrix;
pub use optim::{glorot_uniform, glorot_uniform_seeded, Adam, Optimizer, OptimizerKind, Sgd};
pub use sparse::{CsrStructure, SparseMatrix};
pub use tape::{Activation, LossKind, Tape, TensorId};

use thiserror::Error;

/// Errors raised by tensor operations and the optimizer.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch ({}x{} vs {}x{})", lhs.0, lhs.1, rhs.0, rhs.1)]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },
    #[error("{op}: empty batch")]
    EmptyBatch { op: &'static str },
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("optimizer step: {0}")]
    OptimizerState(String),
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}
