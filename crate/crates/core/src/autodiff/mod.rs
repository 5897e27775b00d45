//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records one forward pass. Leaves are created with
//! [`Tape::param`] (trainable) or [`Tape::constant`]; every op on a [`Var`]
//! appends a node. [`Tape::backward`] sweeps the nodes in reverse order once
//! and returns [`Gradients`]; a second sweep of the same tape is an error.
//!
//! Broadcasting is limited to [`Var::add_row`] (bias add). Every op checks
//! its output for non-finite values and names itself in the error.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, grad_check_params};
pub use params::{glorot_uniform, Bound, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("degenerate input to {op} (zero norm or zero variance)")]
    Degenerate { op: &'static str },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

#[cfg(test)]
mod tests;
