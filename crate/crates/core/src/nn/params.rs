use super::Matrix;

/// A container of trainable tensors with a fixed, stable visiting order.
///
/// Gradients are stored in the same type as the parameters they belong to,
/// so optimizers and the gradient checker can zip the two by position.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<&[f64]>;

    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    /// One name per tensor, in visiting order.
    fn tensor_names(&self) -> Vec<String>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Euclidean norm over every entry.
    fn global_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    fn scale_all(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += other`, both with identical layout.
    fn add_assign_params(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

impl Parameters for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }

    fn tensor_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
}

impl Parameters for Matrix {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.data()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.data_mut()]
    }

    fn tensor_names(&self) -> Vec<String> {
        vec!["w".into()]
    }
}
