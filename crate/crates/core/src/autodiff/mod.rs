//! Minimal reverse-mode automatic differentiation over dense `f64` matrices,
//! plus Adam, a finite-difference gradient checker and checkpoint I/O.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod matrix;
mod operator;
mod params;
mod tape;

pub use adam::{adam_step, Adam, AdamState, BETA1, BETA2, EPSILON};
pub use gradcheck::{
    grad_check, relative_error, GradCheckConfig, GradCheckFailure, GradCheckReport, ParamCheck,
};
pub use matrix::Matrix;
pub use operator::{CsrMatrix, LinearOperator};
pub use params::{Gradients, ParamGroup, ParamId, ParamStore, Parameter};
pub use tape::{bce_value, stable_sigmoid, Tape, Var, PROB_CLAMP};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{op} called with no input")]
    EmptyInput { op: &'static str },
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("tape has no parameter store")]
    DetachedTape,
    #[error("matrix data has {len} values, expected {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[cfg(test)]
mod tests;
