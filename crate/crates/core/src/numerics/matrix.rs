use std::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar type a [`Matrix`] can hold.
///
/// Training runs in `f32`; `f64` exists so finite-difference checks have
/// enough precision to mean something.
pub trait Real:
    Float + Default + fmt::Debug + fmt::Display + std::iter::Sum + Send + Sync + 'static
{
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// The storage type used for frames, pooled vectors and model weights.
pub type EmbeddingMatrix = Matrix<f32>;

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

/// Default guard for [`Matrix::l2_normalize_rows`].
pub const NORM_EPS: f64 = 1e-12;

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(values: &[T]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn scalar(v: T) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a 1×1 matrix (or the first entry of anything else).
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks equally wide matrices vertically.
    pub fn vstack(parts: &[&Matrix<T>]) -> Result<Self> {
        let cols = parts.first().ok_or(Error::EmptyInput("vstack"))?.cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::Shape {
                    op: "vstack",
                    left: (rows, cols),
                    right: p.shape(),
                });
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Matrix product `self · other`.
    ///
    /// Each output entry is accumulated left to right over the inner
    /// dimension, so results are reproducible for a fixed build.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (j, o) in out_row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for p in 0..k {
                    acc = acc + self.data[i * k + p] * other.data[p * n + j];
                }
                *o = acc;
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_transposed(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "matmul_transposed",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let a = self.row(i);
            for j in 0..n {
                let b = other.row(j);
                let mut acc = T::zero();
                for p in 0..k {
                    acc = acc + a[p] * b[p];
                }
                out.data[i * n + j] = acc;
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`, used by backward passes.
    pub fn transposed_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "transposed_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        for p in 0..k {
            let a = self.row(p);
            let b = other.row(p);
            for i in 0..m {
                let ai = a[i];
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for j in 0..n {
                    out_row[j] = out_row[j] + ai * b[j];
                }
            }
        }
        Ok(out)
    }

    /// Adds a 1×cols bias row to every row.
    pub fn add_row_broadcast(&self, bias: &Self) -> Result<Self> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::Shape {
                op: "add_bias",
                left: self.shape(),
                right: bias.shape(),
            });
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for (o, &b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *o = *o + b;
            }
        }
        Ok(out)
    }

    /// Column sums as a 1×cols row.
    pub fn column_sums(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, &v) in out.data.iter_mut().zip(self.row(r)) {
                *o = *o + v;
            }
        }
        out
    }

    pub fn row_norms(&self) -> Vec<T> {
        (0..self.rows)
            .map(|r| self.row(r).iter().fold(T::zero(), |a, &v| a + v * v).sqrt())
            .collect()
    }

    /// Scales every row to unit Euclidean norm.
    pub fn l2_normalize_rows(&self, eps: f64) -> Result<Self> {
        let norms = self.row_norms();
        let mut out = self.clone();
        for (r, &n) in norms.iter().enumerate() {
            if !(n.as_f64() > eps) {
                return Err(Error::DegenerateVector {
                    row: r,
                    norm: n.as_f64(),
                });
            }
            for v in out.row_mut(r) {
                *v = *v / n;
            }
        }
        Ok(out)
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = out.row_mut(r);
            let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        out
    }

    pub fn log_softmax_rows(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = out.row_mut(r);
            let lse = log_sum_exp(row);
            for v in row.iter_mut() {
                *v = *v - lse;
            }
        }
        out
    }

    /// Index of the largest entry of each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows).map(|r| argmax(self.row(r))).collect()
    }
}

/// Index of the first maximal element.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable `ln Σ exp(v)`; returns -inf for an all -inf slice.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    if max == T::neg_infinity() {
        return max;
    }
    let total = values.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
    max + total.ln()
}

/// Mean over rows of `-log softmax(logits)[row, label]`.
pub fn cross_entropy_mean<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> Result<T> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape {
            op: "cross_entropy_mean",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if logits.rows() == 0 {
        return Err(Error::EmptyInput("cross_entropy_mean"));
    }
    let mut total = T::zero();
    for (r, &label) in labels.iter().enumerate() {
        if label >= logits.cols() {
            return Err(Error::IndexOutOfRange {
                index: label,
                bound: logits.cols(),
            });
        }
        let row = logits.row(r);
        total = total + (log_sum_exp(row) - row[label]);
    }
    Ok(total / T::of_f64(logits.rows() as f64))
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn naive_matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a[(i, p)] * b[(p, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_dot() {
        let id = Matrix::<f64>::identity(2);
        let b = Matrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        assert_eq!(id.matmul(&b).unwrap(), b);
        let a = Matrix::from_rows(&[[1.0, 2.0]]);
        let c = Matrix::from_rows(&[[3.0], [4.0]]);
        assert_eq!(a.matmul(&c).unwrap().as_slice(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix::<f32>::zeros(2, 3);
        let b = Matrix::<f32>::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
        assert!(matches!(
            err,
            Error::Shape {
                left: (2, 3),
                right: (2, 3),
                ..
            }
        ));
    }

    #[test]
    fn matmul_matches_triple_loop_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random(3, 4, &mut rng);
        let b = random(4, 2, &mut rng);
        assert_eq!(a.matmul(&b).unwrap(), naive_matmul(&a, &b));
        for _ in 0..50 {
            let (m, k, n) = (
                rng.random_range(1..=16),
                rng.random_range(1..=16),
                rng.random_range(1..=16),
            );
            let a = random(m, k, &mut rng);
            let b = random(k, n, &mut rng);
            assert_eq!(a.matmul(&b).unwrap(), naive_matmul(&a, &b));
            assert_eq!(
                a.matmul_transposed(&b.transpose()).unwrap(),
                naive_matmul(&a, &b)
            );
        }
    }

    #[test]
    fn l2_normalize_examples() {
        let m = Matrix::from_rows(&[[3.0f64, 4.0]]);
        let n = m.l2_normalize_rows(NORM_EPS).unwrap();
        assert!((n[(0, 0)] - 0.6).abs() < 1e-12 && (n[(0, 1)] - 0.8).abs() < 1e-12);
        let unit = Matrix::from_rows(&[[0.0f64, 1.0]]);
        assert_eq!(unit.l2_normalize_rows(NORM_EPS).unwrap(), unit);
        let zero = Matrix::from_rows(&[[1.0f64, 0.0], [0.0, 0.0]]);
        assert!(matches!(
            zero.l2_normalize_rows(1e-12),
            Err(Error::DegenerateVector { row: 1, .. })
        ));
    }

    #[test]
    fn softmax_examples() {
        let s = Matrix::from_rows(&[[0.0f64, 0.0]]).softmax_rows();
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
        let s = Matrix::from_rows(&[[1000.0f32, 0.0]]).softmax_rows();
        assert!(s.is_finite());
        assert!((s[(0, 0)] - 1.0).abs() < 1e-6 && s[(0, 1)] < 1e-6);
        let s = Matrix::from_rows(&[[1.0f64, 0.0]]).softmax_rows();
        let e = std::f64::consts::E;
        assert!((s[(0, 0)] - e / (e + 1.0)).abs() < 1e-12);
        assert!((s[(0, 0)] - 0.73106).abs() < 1e-5);
        assert!((s[(0, 1)] - 0.26894).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Matrix::<f64>::zeros(4, 3);
        let ce = cross_entropy_mean(&uniform, &[0, 1, 2, 1]).unwrap();
        assert!((ce - 3f64.ln()).abs() < 1e-12);

        let sat = Matrix::from_rows(&[[50.0f64, 0.0, 0.0], [0.0, 0.0, 50.0]]);
        assert!(cross_entropy_mean(&sat, &[0, 2]).unwrap() < 1e-6);

        let m = Matrix::from_rows(&[[1.0f64, 0.0], [0.0, 1.0]]);
        let e = std::f64::consts::E;
        let ce = cross_entropy_mean(&m, &[0, 1]).unwrap();
        assert!((ce + (e / (e + 1.0)).ln()).abs() < 1e-12);
        assert!((ce - 0.31326).abs() < 1e-5);

        assert!(matches!(
            cross_entropy_mean(&m, &[0, 2]),
            Err(Error::IndexOutOfRange { index: 2, bound: 2 })
        ));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in prop::collection::vec(-10.0f64..10.0, 2..12)) {
            prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let m = Matrix::row_vector(&v);
            let once = m.l2_normalize_rows(NORM_EPS).unwrap();
            let twice = once.l2_normalize_rows(NORM_EPS).unwrap();
            prop_assert!((once.row_norms()[0] - 1.0).abs() < 1e-6);
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn softmax_rows_sum_to_one_and_shift_invariant(
            v in prop::collection::vec(-50.0f64..50.0, 1..10),
            shift in -100.0f64..100.0,
        ) {
            let m = Matrix::row_vector(&v);
            let s = m.softmax_rows();
            prop_assert!((s.sum() - 1.0).abs() < 1e-6);
            let shifted = m.map(|x| x + shift).softmax_rows();
            for (a, b) in s.as_slice().iter().zip(shifted.as_slice()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn cross_entropy_is_nonnegative(
            v in prop::collection::vec(-20.0f64..20.0, 6),
            l0 in 0usize..3, l1 in 0usize..3,
        ) {
            let m = Matrix::from_vec(2, 3, v).unwrap();
            prop_assert!(cross_entropy_mean(&m, &[l0, l1]).unwrap() >= 0.0);
        }
    }
}
