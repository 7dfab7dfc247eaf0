//! Error metrics, the benchmark matrix and ablation runs.

mod ablation;
mod benchmark;
mod metrics;
mod report;

use thiserror::Error;

pub use ablation::{run_ablation, AblationKind, AblationReport, AblationRow, AblationSpec};
pub use benchmark::{
    cell_label, mean_std, run_benchmark, run_cell, train_family, AuxMode, BenchmarkData, BenchmarkMatrix, BenchmarkSpec,
    Cell, Comparison, Family,
};
pub use metrics::{mape_by_lane, mape_lane, mape_overall};
pub use report::EvalReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions for {actuals} actual values")]
    LengthMismatch { preds: usize, actuals: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("actual value {value} at position {index} is not positive")]
    NonPositiveActual { index: usize, value: f64 },
    #[error("{0}")]
    Config(String),
}
