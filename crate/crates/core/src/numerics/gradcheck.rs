//! Central finite differences, the reference for every analytic gradient.

use super::matrix::Matrix;
use super::param::Parameters;

/// Step used by the gradient checks.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute rather than relative
/// terms; below it, central-difference round-off dominates.
pub const GRAD_FLOOR: f64 = 1e-5;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every entry of `x`.
pub fn finite_difference_grad<F>(mut f: F, x: &Matrix<f64>, h: f64) -> Matrix<f64>
where
    F: FnMut(&Matrix<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.as_slice().len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        out.as_mut_slice()[i] = (up - down) / (2.0 * h);
    }
    out
}

/// `|a - b| / max(|a|, |b|, GRAD_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

pub fn max_relative_error(analytic: &Matrix<f64>, numeric: &Matrix<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max)
}

/// Finite-difference gradients for every parameter of `model`, where
/// `loss` evaluates the scalar objective for a perturbed copy.
pub fn numeric_param_grads<M, F>(model: &M, mut loss: F, h: f64) -> Vec<Matrix<f64>>
where
    M: Parameters<f64> + Clone,
    F: FnMut(&M) -> f64,
{
    let count = model.params().len();
    (0..count)
        .map(|i| {
            let x = model.params()[i].value.clone();
            let mut probe = model.clone();
            finite_difference_grad(
                |v| {
                    probe.params_mut()[i].value = v.clone();
                    loss(&probe)
                },
                &x,
                h,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Param, Tape};

    #[test]
    fn sum_has_unit_gradient() {
        let x = Matrix::from_rows(&[[0.3, -2.0], [5.0, 1.0]]);
        let g = finite_difference_grad(|m| m.sum(), &x, FD_STEP);
        for &v in g.as_slice() {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn squared_norm_gradient() {
        let x = Matrix::row_vector(&[1.0, 2.0]);
        let g = finite_difference_grad(|m| m.as_slice().iter().map(|v| v * v).sum(), &x, FD_STEP);
        assert!((g[(0, 0)] - 2.0).abs() < 1e-6);
        assert!((g[(0, 1)] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn tape_square_matches_closed_form() {
        let mut tape = Tape::<f64>::new();
        let x = Param::scalar(3.0);
        let xv = x.track(&mut tape);
        let y = tape.matmul(xv, xv).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!((grads.get(xv).item() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn constant_param_gets_exact_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Matrix::scalar(2.0));
        let unused = tape.leaf(Matrix::row_vector(&[1.0, 4.0]));
        let y = tape.matmul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(unused).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut recorded = Tape::<f64>::new();
        let v = recorded.leaf(Matrix::scalar(1.0));
        let empty = Tape::<f64>::new();
        assert!(matches!(
            empty.backward(v),
            Err(crate::error::Error::State(_))
        ));
    }
}
