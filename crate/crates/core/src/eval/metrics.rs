use super::EvalError;
use crate::nn::Matrix;

/// Mean absolute percentage error of one lane, in percent.
pub fn mape_lane(preds: &[f64], actuals: &[f64]) -> Result<f64, EvalError> {
    if preds.len() != actuals.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), actuals: actuals.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty("mape_lane"));
    }
    let mut sum = 0.0;
    for (i, (&p, &a)) in preds.iter().zip(actuals).enumerate() {
        if a.is_nan() || a <= 0.0 {
            return Err(EvalError::NonPositiveActual { index: i, value: a });
        }
        sum += (a - p).abs() / a;
    }
    Ok(sum / preds.len() as f64 * 100.0)
}

/// Arithmetic mean of per-lane MAPEs.
pub fn mape_overall(per_lane: &[f64]) -> Result<f64, EvalError> {
    if per_lane.is_empty() {
        return Err(EvalError::Empty("mape_overall"));
    }
    Ok(per_lane.iter().sum::<f64>() / per_lane.len() as f64)
}

/// Column-wise [`mape_lane`] of two `M x N` matrices.
pub fn mape_by_lane(preds: &Matrix, actuals: &Matrix) -> Result<Vec<f64>, EvalError> {
    if preds.shape() != actuals.shape() {
        return Err(EvalError::LengthMismatch { preds: preds.data().len(), actuals: actuals.data().len() });
    }
    (0..preds.cols()).map(|n| mape_lane(&preds.column(n), &actuals.column(n))).collect()
}
