use super::matrix::{gemm, matmul};
use super::{Matrix, NnError};

/// `input * w (+ b)`, with `w` laid out as `in x out`.
pub fn linear_forward(input: &Matrix, w: &Matrix, b: Option<&[f64]>) -> Result<Matrix, NnError> {
    if input.cols() != w.rows() {
        return Err(NnError::DimensionMismatch {
            op: "linear_forward",
            expected: format!("input width {}", w.rows()),
            found: format!("input width {}", input.cols()),
        });
    }
    if let Some(b) = b {
        if b.len() != w.cols() {
            return Err(NnError::DimensionMismatch {
                op: "linear_forward",
                expected: format!("bias length {}", w.cols()),
                found: format!("bias length {}", b.len()),
            });
        }
    }
    let mut out = matmul(input, false, w, false);
    if let Some(b) = b {
        out.add_row_broadcast(b);
    }
    Ok(out)
}

/// Accumulates `dW += input^T * grad_out` (and `db` when present) and
/// returns the gradient with respect to `input`.
pub fn linear_backward(
    input: &Matrix,
    w: &Matrix,
    grad_out: &Matrix,
    grad_w: &mut Matrix,
    grad_b: Option<&mut [f64]>,
) -> Matrix {
    gemm(1.0, input, true, grad_out, false, 1.0, grad_w);
    if let Some(gb) = grad_b {
        grad_out.accumulate_column_sums(gb);
    }
    matmul(grad_out, false, w, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_pass_through() {
        let x = Matrix::from_fn(3, 4, |r, c| r as f64 - c as f64 * 0.5);
        let y = linear_forward(&x, &Matrix::identity(4), Some(&[0.0; 4])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn scalar_product() {
        let y = linear_forward(&Matrix::row_vector(&[2.0]), &Matrix::row_vector(&[3.0]), None).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let w = Matrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = [0.25, -0.5];
        let y = linear_forward(&x, &w, Some(&b)).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                let mut s = b[j];
                for k in 0..3 {
                    s += x.get(i, k) * w.get(k, j);
                }
                assert!((y.get(i, j) - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let x = Matrix::zeros(2, 3);
        assert!(linear_forward(&x, &Matrix::zeros(2, 2), None).is_err());
        assert!(linear_forward(&x, &Matrix::zeros(3, 2), Some(&[0.0])).is_err());
    }
}
