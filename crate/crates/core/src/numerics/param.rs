use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, Real};
use super::tape::{Gradients, Tape, Var};

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param<T> {
    pub value: Matrix<T>,
    #[serde(skip)]
    grad: Option<Matrix<T>>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Matrix<T>) -> Self {
        Param { value, grad: None }
    }

    pub fn scalar(v: T) -> Self {
        Self::new(Matrix::scalar(v))
    }

    /// Accumulated gradient, zeros if nothing was accumulated yet.
    pub fn grad(&self) -> Matrix<T> {
        self.grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(self.value.rows(), self.value.cols()))
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn accumulate(&mut self, g: &Matrix<T>) {
        assert_eq!(g.shape(), self.value.shape(), "gradient shape mismatch");
        match &mut self.grad {
            Some(acc) => acc.add_assign(g),
            None => self.grad = Some(g.clone()),
        }
    }

    /// Records the current value as a leaf on `tape`.
    pub fn track(&self, tape: &mut Tape<T>) -> Var {
        tape.leaf(self.value.clone())
    }

    pub fn accumulate_from(&mut self, grads: &Gradients<T>, var: Var) {
        self.accumulate(&grads.get(var));
    }

    pub fn is_scalar(&self) -> bool {
        self.value.shape() == (1, 1)
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        Param::new(self.value.cast())
    }
}

/// Anything that owns a fixed, ordered list of parameters.
pub trait Parameters<T: Real> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.as_slice().len()).sum()
    }
}
