use serde::{Deserialize, Serialize};

use super::{OptimizerKind, TrainConfig, TrainError};
use crate::nn::Parameters;

/// Optimizer memory, flattened in the parameters' visiting order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam => OptimizerState::Adam { m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerState::Sgd => OptimizerKind::Sgd,
            OptimizerState::Adam { .. } => OptimizerKind::Adam,
        }
    }
}

/// Applies one update to `params` from `grads`.
///
/// Gradients are clipped to `config.clip_norm` first when set. Any
/// non-finite gradient entry aborts without touching `params` or `state`.
pub fn optimizer_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if !grads.all_finite() {
        return Err(TrainError::NonFiniteGradient);
    }
    let n = params.num_params();
    if grads.num_params() != n {
        return Err(TrainError::InvalidState(format!("gradient has {} entries, parameters {}", grads.num_params(), n)));
    }
    let scale = match config.clip_norm {
        Some(max) => {
            let norm = grads.global_norm();
            if norm > max {
                max / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    let lr = config.learning_rate;
    let g_all = grads.tensors();
    match state {
        OptimizerState::Sgd => {
            for (p, g) in params.tensors_mut().into_iter().zip(g_all) {
                for (x, &d) in p.iter_mut().zip(g) {
                    *x -= lr * scale * d;
                }
            }
        }
        OptimizerState::Adam { m, v, t } => {
            if m.len() != n || v.len() != n {
                return Err(TrainError::InvalidState(format!("Adam moments hold {} entries, parameters {}", m.len(), n)));
            }
            *t += 1;
            let (b1, b2) = (config.beta1, config.beta2);
            let c1 = 1.0 - b1.powi(*t as i32);
            let c2 = 1.0 - b2.powi(*t as i32);
            let mut i = 0;
            for (p, g) in params.tensors_mut().into_iter().zip(g_all) {
                for (x, &d) in p.iter_mut().zip(g) {
                    let d = d * scale;
                    m[i] = b1 * m[i] + (1.0 - b1) * d;
                    v[i] = b2 * v[i] + (1.0 - b2) * d * d;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    *x -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
                    i += 1;
                }
            }
        }
    }
    Ok(())
}
