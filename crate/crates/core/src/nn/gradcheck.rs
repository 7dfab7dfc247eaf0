use super::{NnError, Parameters};

/// Smallest denominator used when forming a relative error, so entries whose
/// true gradient is zero are compared on an absolute scale instead.
pub const DEFAULT_GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `loss` at `params`,
/// one entry at a time, and reports the worst relative error.
pub fn grad_check<P, F>(params: &P, analytic: &P, epsilon: f64, loss: F) -> Result<GradCheckReport, NnError>
where
    P: Parameters,
    F: FnMut(&P) -> f64,
{
    grad_check_with_floor(params, analytic, epsilon, DEFAULT_GRAD_FLOOR, loss)
}

pub fn grad_check_with_floor<P, F>(
    params: &P,
    analytic: &P,
    epsilon: f64,
    floor: f64,
    mut loss: F,
) -> Result<GradCheckReport, NnError>
where
    P: Parameters,
    F: FnMut(&P) -> f64,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(NnError::InvalidEpsilon(epsilon));
    }
    let names = params.tensor_names();
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    if grads.len() != sizes.len() || grads.iter().zip(&sizes).any(|(g, &s)| g.len() != s) {
        return Err(NnError::DimensionMismatch {
            op: "grad_check",
            expected: format!("gradient layout {sizes:?}"),
            found: format!("gradient layout {:?}", grads.iter().map(Vec::len).collect::<Vec<_>>()),
        });
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0 };
    for (t, &size) in sizes.iter().enumerate() {
        for k in 0..size {
            let original = probe.tensors()[t][k];
            probe.tensors_mut()[t][k] = original + epsilon;
            let plus = loss(&probe);
            probe.tensors_mut()[t][k] = original - epsilon;
            let minus = loss(&probe);
            probe.tensors_mut()[t][k] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NnError::NonFinite("loss at perturbed point"));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(grads[t][k], numeric, floor);
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((names[t].clone(), k));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
