use serde::{Deserialize, Serialize};

use super::metrics::{mape_by_lane, mape_overall};
use super::EvalError;
use crate::data::IndexKind;
use crate::nn::Matrix;

/// MAPE of one trained model on one test set, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub scenario: String,
    pub index_kind: IndexKind,
    pub lane_mape: Vec<f64>,
    pub overall_mape: f64,
    pub lane_counts: Vec<usize>,
}

impl EvalReport {
    /// Scores `preds` against `actuals`, both `M x N` in index points.
    pub fn from_predictions(
        model: &str,
        scenario: &str,
        index_kind: IndexKind,
        preds: &Matrix,
        actuals: &Matrix,
    ) -> Result<Self, EvalError> {
        let lane_mape = mape_by_lane(preds, actuals)?;
        let overall_mape = mape_overall(&lane_mape)?;
        Ok(EvalReport {
            model: model.into(),
            scenario: scenario.into(),
            index_kind,
            lane_counts: vec![actuals.rows(); actuals.cols()],
            lane_mape,
            overall_mape,
        })
    }

    /// Recomputing the overall value from the stored lanes reproduces it.
    pub fn is_consistent(&self) -> bool {
        mape_overall(&self.lane_mape).is_ok_and(|m| m == self.overall_mape)
            && self.lane_mape.iter().all(|&m| m >= 0.0)
            && self.lane_counts.len() == self.lane_mape.len()
    }

    pub fn to_delimited(&self) -> String {
        let mut out = String::from("model,scenario,index,lane,count,mape\n");
        for (n, (m, c)) in self.lane_mape.iter().zip(&self.lane_counts).enumerate() {
            out.push_str(&format!("{},{},{},{},{},{}\n", self.model, self.scenario, self.index_kind, n + 1, c, m));
        }
        let total: usize = self.lane_counts.iter().sum();
        out.push_str(&format!("{},{},{},overall,{},{}\n", self.model, self.scenario, self.index_kind, total, self.overall_mape));
        out
    }
}
