use super::NnError;

/// Logistic sigmoid, evaluated so that neither tail overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh_act(x: f64) -> f64 {
    x.tanh()
}

/// LeakyReLU with a validated negative slope in `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeakyRelu {
    alpha: f64,
}

impl LeakyRelu {
    pub fn new(alpha: f64) -> Result<Self, NnError> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(LeakyRelu { alpha })
        } else {
            Err(NnError::InvalidAlpha(alpha))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if x >= 0.0 {
            x
        } else {
            self.alpha * x
        }
    }

    /// Slope of [`apply`](Self::apply); the `x >= 0` branch owns zero.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        if x >= 0.0 {
            1.0
        } else {
            self.alpha
        }
    }
}

pub fn leaky_relu(x: f64, alpha: f64) -> Result<f64, NnError> {
    Ok(LeakyRelu::new(alpha)?.apply(x))
}
