//! Numeric primitives with exact analytic gradients.

mod activation;
mod gradcheck;
mod linear;
mod loss;
mod lstm;
pub mod matrix;
mod params;

use thiserror::Error;

pub use activation::{leaky_relu, sigmoid, tanh_act, LeakyRelu};
pub use gradcheck::{grad_check, grad_check_with_floor, relative_error, GradCheckReport, DEFAULT_GRAD_FLOOR};
pub use linear::{linear_backward, linear_forward};
pub use loss::{mse, mse_grad};
pub use lstm::{
    lstm_cell_backward, lstm_cell_forward, lstm_sequence_backward, lstm_sequence_forward, CellCache, LstmCellParams,
    LstmState, SequenceCache, SequenceOutput,
};
pub use matrix::Matrix;
pub use params::Parameters;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: dimension mismatch, expected {expected}, found {found}")]
    DimensionMismatch { op: &'static str, expected: String, found: String },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("empty sequence")]
    EmptySequence,
    #[error("leaky relu alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("finite-difference epsilon must lie in [1e-7, 1e-3], got {0}")]
    InvalidEpsilon(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("stale cache: {0}")]
    StaleCache(&'static str),
}
