//! Gradient tape over the fixed set of primitives the models need.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the node
//! list is a valid topological order for backpropagation. There is no
//! operator overloading: every op is an explicit method that computes its
//! forward value eagerly and records what its backward rule needs.

use super::matrix::{log_sum_exp, Matrix, Real};
use crate::baselines::ctc;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulTransposed(Var, Var),
    AddBias(Var, Var),
    L2NormalizeRows(Var, Vec<T>),
    ExpScale(Var, Var),
    Scale(Var, T),
    Add(Var, Var),
    Relu(Var),
    MeanRows(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Matrix<T>,
    },
    Ctc {
        logits: Var,
        grad: Matrix<T>,
    },
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Records a forward computation for a single backward sweep.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every node on a tape.
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for the leaf `v`; a leaf the loss does not depend on gets zeros.
    pub fn get(&self, v: Var) -> Matrix<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

/// Statistics handed to [`Tape::batch_norm`] in evaluation mode.
pub struct RunningStats<'a, T> {
    pub mean: &'a [T],
    pub var: &'a [T],
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or data) node.
    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_transposed(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_transposed(self.value(b))?;
        Ok(self.push(value, Op::MatMulTransposed(a, b)))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = self.value(x).add_row_broadcast(self.value(bias))?;
        Ok(self.push(value, Op::AddBias(x, bias)))
    }

    pub fn l2_normalize_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        let input = self.value(x);
        let value = input.l2_normalize_rows(eps)?;
        let norms = input.row_norms();
        Ok(self.push(value, Op::L2NormalizeRows(x, norms)))
    }

    /// `exp(s) · x` for a 1×1 node `s`.
    pub fn exp_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "exp_scale",
                left: self.value(x).shape(),
                right: sv.shape(),
            });
        }
        let value = self.value(x).scale(sv.item().exp());
        Ok(self.push(value, Op::ExpScale(x, s)))
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        let value = self.value(x).scale(k);
        self.push(value, Op::Scale(x, k))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Mean of equally shaped nodes.
    pub fn mean(&mut self, vars: &[Var]) -> Result<Var> {
        let (&first, rest) = vars.split_first().ok_or(Error::EmptyInput("mean"))?;
        let mut acc = first;
        for &v in rest {
            acc = self.add(acc, v)?;
        }
        Ok(self.scale(acc, T::one() / T::of_f64(vars.len() as f64)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push(value, Op::Relu(x))
    }

    /// Column means, giving a 1×cols node.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let input = self.value(x);
        if input.rows() == 0 {
            return Err(Error::EmptyInput("mean_rows"));
        }
        let value = input
            .column_sums()
            .scale(T::one() / T::of_f64(input.rows() as f64));
        Ok(self.push(value, Op::MeanRows(x)))
    }

    /// Per-column batch normalization followed by the affine `gamma`,
    /// `beta` transform. With `running` set, those statistics replace the
    /// batch statistics and are treated as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        running: Option<RunningStats<'_, T>>,
    ) -> Result<Var> {
        let input = self.value(x);
        let (n, d) = input.shape();
        for p in [gamma, beta] {
            if self.value(p).shape() != (1, d) {
                return Err(Error::Shape {
                    op: "batch_norm",
                    left: (n, d),
                    right: self.value(p).shape(),
                });
            }
        }
        let eps = T::of_f64(eps);
        let (mean, var) = match &running {
            Some(stats) => (stats.mean.to_vec(), stats.var.to_vec()),
            None => {
                if n < 2 {
                    return Err(Error::BatchTooSmall(n));
                }
                batch_moments(input)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = input.clone();
        for r in 0..n {
            for (c, v) in xhat.row_mut(r).iter_mut().enumerate() {
                *v = (*v - mean[c]) * inv_std[c];
            }
        }
        let g = self.value(gamma).as_slice();
        let b = self.value(beta).as_slice();
        let mut value = xhat.clone();
        for r in 0..n {
            for (c, v) in value.row_mut(r).iter_mut().enumerate() {
                *v = *v * g[c] + b[c];
            }
        }
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: running.is_none(),
            },
        ))
    }

    /// Fused row softmax and mean cross-entropy. `mask` marks logits
    /// (row-major, same shape as `logits`) excluded from the softmax.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        mask: Option<&[bool]>,
    ) -> Result<Var> {
        let input = self.value(logits);
        let (n, c) = input.shape();
        if labels.len() != n {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                left: (n, c),
                right: (labels.len(), 1),
            });
        }
        if n == 0 {
            return Err(Error::EmptyInput("softmax_cross_entropy"));
        }
        if let Some(m) = mask {
            if m.len() != n * c {
                return Err(Error::Shape {
                    op: "softmax_cross_entropy mask",
                    left: (n, c),
                    right: (m.len(), 1),
                });
            }
        }
        let mut probs = Matrix::zeros(n, c);
        let mut total = T::zero();
        for (r, &label) in labels.iter().enumerate() {
            if label >= c {
                return Err(Error::IndexOutOfRange {
                    index: label,
                    bound: c,
                });
            }
            let masked = |j: usize| mask.is_some_and(|m| m[r * c + j]) && j != label;
            let row: Vec<T> = input
                .row(r)
                .iter()
                .enumerate()
                .map(|(j, &v)| if masked(j) { T::neg_infinity() } else { v })
                .collect();
            let lse = log_sum_exp(&row);
            total = total + (lse - row[label]);
            for (p, &v) in probs.row_mut(r).iter_mut().zip(&row) {
                *p = (v - lse).exp();
            }
        }
        let value = Matrix::scalar(total / T::of_f64(n as f64));
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// CTC negative log-likelihood of `target` under row-log-softmax of
    /// `logits` (T×V, blank at column 0).
    pub fn ctc_loss(&mut self, logits: Var, target: &[usize]) -> Result<Var> {
        let input = self.value(logits);
        let logprobs = input.log_softmax_rows();
        let fb = ctc::forward_backward(&logprobs, target)?;
        let grad = ctc::logit_gradient(&logprobs, &fb.occupancy);
        Ok(self.push(Matrix::scalar(fb.loss), Op::Ctc { logits, grad }))
    }

    /// Reverse sweep from a 1×1 `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let node = self.nodes.get(loss.0).ok_or_else(|| {
            Error::State(format!(
                "backward from node {} but the tape holds {} nodes; run the forward pass first",
                loss.0,
                self.nodes.len()
            ))
        })?;
        if node.value.shape() != (1, 1) {
            return Err(Error::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => grads[i] = Some(g),
                Op::MatMul(a, b) => {
                    let da = g.matmul_transposed(self.value(*b))?;
                    let db = self.value(*a).transposed_matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulTransposed(a, b) => {
                    // out = a·bᵀ: da = g·b, db = gᵀ·a
                    let da = g.matmul(self.value(*b))?;
                    let db = g.transposed_matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddBias(x, b) => {
                    accumulate(&mut grads, *b, g.column_sums());
                    accumulate(&mut grads, *x, g);
                }
                Op::L2NormalizeRows(x, norms) => {
                    let y = &node.value;
                    let mut dx = g.clone();
                    for (r, &n) in norms.iter().enumerate() {
                        let yr = y.row(r);
                        let dot = yr
                            .iter()
                            .zip(g.row(r))
                            .fold(T::zero(), |a, (&u, &v)| a + u * v);
                        for (d, &yv) in dx.row_mut(r).iter_mut().zip(yr) {
                            *d = (*d - yv * dot) / n;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ExpScale(x, s) => {
                    let k = self.value(*s).item().exp();
                    let xv = self.value(*x);
                    let ds = xv
                        .as_slice()
                        .iter()
                        .zip(g.as_slice())
                        .fold(T::zero(), |a, (&u, &v)| a + u * v)
                        * k;
                    accumulate(&mut grads, *s, Matrix::scalar(ds));
                    accumulate(&mut grads, *x, g.scale(k));
                }
                Op::Scale(x, k) => accumulate(&mut grads, *x, g.scale(*k)),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let mut dx = g;
                    for (d, &v) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                        if v <= T::zero() {
                            *d = T::zero();
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::MeanRows(x) => {
                    let (n, d) = self.value(*x).shape();
                    let k = T::one() / T::of_f64(n as f64);
                    let mut dx = Matrix::zeros(n, d);
                    for r in 0..n {
                        for (o, &v) in dx.row_mut(r).iter_mut().zip(g.as_slice()) {
                            *o = v * k;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    batch_stats,
                } => {
                    let (n, d) = xhat.shape();
                    let gam = self.value(*gamma).as_slice();
                    let mut dgamma = Matrix::zeros(1, d);
                    let dbeta = g.column_sums();
                    let mut dxhat = g.clone();
                    for r in 0..n {
                        for c in 0..d {
                            dgamma[(0, c)] = dgamma[(0, c)] + g[(r, c)] * xhat[(r, c)];
                            dxhat[(r, c)] = g[(r, c)] * gam[c];
                        }
                    }
                    let dx = if *batch_stats {
                        let nf = T::of_f64(n as f64);
                        let sum_dxhat = dxhat.column_sums();
                        let mut sum_dxhat_xhat = vec![T::zero(); d];
                        for r in 0..n {
                            for c in 0..d {
                                sum_dxhat_xhat[c] =
                                    sum_dxhat_xhat[c] + dxhat[(r, c)] * xhat[(r, c)];
                            }
                        }
                        let mut dx = Matrix::zeros(n, d);
                        for r in 0..n {
                            for c in 0..d {
                                dx[(r, c)] = inv_std[c] / nf
                                    * (nf * dxhat[(r, c)]
                                        - sum_dxhat[(0, c)]
                                        - xhat[(r, c)] * sum_dxhat_xhat[c]);
                            }
                        }
                        dx
                    } else {
                        let mut dx = dxhat;
                        for r in 0..n {
                            for (c, v) in dx.row_mut(r).iter_mut().enumerate() {
                                *v = *v * inv_std[c];
                            }
                        }
                        dx
                    };
                    accumulate(&mut grads, *gamma, dgamma);
                    accumulate(&mut grads, *beta, dbeta);
                    accumulate(&mut grads, *x, dx);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let k = g.item() / T::of_f64(labels.len() as f64);
                    let mut dl = probs.clone();
                    for (r, &label) in labels.iter().enumerate() {
                        dl[(r, label)] = dl[(r, label)] - T::one();
                    }
                    accumulate(&mut grads, *logits, dl.scale(k));
                }
                Op::Ctc { logits, grad } => {
                    accumulate(&mut grads, *logits, grad.scale(g.item()));
                }
            }
        }

        // Only leaves keep their gradient after the sweep.
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Per-column mean and biased variance.
pub(crate) fn batch_moments<T: Real>(x: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let (n, d) = x.shape();
    let nf = T::of_f64(n as f64);
    let mean: Vec<T> = x.column_sums().as_slice().iter().map(|&s| s / nf).collect();
    let mut var = vec![T::zero(); d];
    for r in 0..n {
        for (c, &v) in x.row(r).iter().enumerate() {
            let dv = v - mean[c];
            var[c] = var[c] + dv * dv;
        }
    }
    for v in &mut var {
        *v = *v / nf;
    }
    (mean, var)
}
