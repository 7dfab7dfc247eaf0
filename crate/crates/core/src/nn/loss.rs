use super::NnError;

/// Mean squared error `(1/M) * sum((y - y_hat)^2)`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64, NnError> {
    check_pair(pred, target)?;
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`mse`] with respect to `pred`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>, NnError> {
    check_pair(pred, target)?;
    let scale = 2.0 / pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| scale * (p - t)).collect())
}

fn check_pair(pred: &[f64], target: &[f64]) -> Result<(), NnError> {
    if pred.is_empty() {
        return Err(NnError::EmptyInput("mse"));
    }
    if pred.len() != target.len() {
        return Err(NnError::DimensionMismatch {
            op: "mse",
            expected: format!("{} targets", pred.len()),
            found: format!("{} targets", target.len()),
        });
    }
    Ok(())
}
