//! Mini-batch optimization of the summed per-lane MSE.

mod optimizer;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalError;
use crate::model::ModelError;
use crate::nn::{mse, mse_grad, Matrix, NnError};

pub use optimizer::{optimizer_step, OptimizerState};
pub use trainer::{dataset_loss, fit, predict_dataset, EpochLog, FitOutcome, TrainLog, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 200,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            shuffle: true,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid optimizer state: {0}")]
    InvalidState(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("missing lane targets: {0}")]
    MissingTargets(String),
    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String, log: Box<TrainLog> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        TrainError::Model(ModelError::Nn(e))
    }
}

fn check_targets(preds: &[Matrix], targets: &Matrix) -> Result<(), TrainError> {
    if targets.cols() != preds.len() {
        return Err(TrainError::MissingTargets(format!("{} prediction lanes, {} target columns", preds.len(), targets.cols())));
    }
    if let Some(p) = preds.iter().find(|p| p.shape() != (targets.rows(), 1)) {
        return Err(TrainError::MissingTargets(format!("prediction {:?} vs {} target rows", p.shape(), targets.rows())));
    }
    Ok(())
}

/// `L = sum_n L_n`, where `L_n` is the batch MSE of lane `n`. `targets` is
/// `B x N`, `preds` holds one `B x 1` column per lane.
pub fn total_loss(preds: &[Matrix], targets: &Matrix) -> Result<(f64, Vec<f64>), TrainError> {
    check_targets(preds, targets)?;
    let per_lane =
        preds.iter().enumerate().map(|(n, p)| mse(p.data(), &targets.column(n))).collect::<Result<Vec<_>, _>>()?;
    Ok((per_lane.iter().sum(), per_lane))
}

/// `dL/dY_n` for every lane.
pub fn loss_gradients(preds: &[Matrix], targets: &Matrix) -> Result<Vec<Matrix>, TrainError> {
    check_targets(preds, targets)?;
    preds
        .iter()
        .enumerate()
        .map(|(n, p)| Ok(Matrix::column_vector(&mse_grad(p.data(), &targets.column(n))?)))
        .collect()
}
