//! Classification head: linear → batch norm → ReLU → linear.

use crate::error::{Error, Result};
use crate::matcher::uniform_weights;
use crate::numerics::{batch_moments, Matrix, Param, Parameters, Real, RunningStats, Tape, Var};
use crate::prompts::{ClassSpace, PromptLabel};
use crate::seeding;

pub const DEFAULT_HIDDEN: usize = 256;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub w1: Param<T>,
    pub b1: Param<T>,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub w2: Param<T>,
    pub b2: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> MlpParams<T> {
    pub fn init(d_in: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = seeding::rng(seed, &[0x313]);
        MlpParams {
            w1: Param::new(uniform_weights(d_in, hidden, &mut rng)),
            b1: Param::new(Matrix::zeros(1, hidden)),
            gamma: Param::new(Matrix::from_vec(1, hidden, vec![T::one(); hidden]).unwrap()),
            beta: Param::new(Matrix::zeros(1, hidden)),
            w2: Param::new(uniform_weights(hidden, classes, &mut rng)),
            b2: Param::new(Matrix::zeros(1, classes)),
            running_mean: vec![T::zero(); hidden],
            running_var: vec![T::one(); hidden],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.value.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.value.cols()
    }

    pub fn classes(&self) -> usize {
        self.w2.value.cols()
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of_f64(x.as_f64())).collect();
        MlpParams {
            w1: self.w1.cast(),
            b1: self.b1.cast(),
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            w2: self.w2.cast(),
            b2: self.b2.cast(),
            running_mean: conv(&self.running_mean),
            running_var: conv(&self.running_var),
            momentum: self.momentum,
            eps: self.eps,
        }
    }

    /// Returns (logits, parameter vars, pre-normalization activations).
    fn record(
        &self,
        tape: &mut Tape<T>,
        pooled: &Matrix<T>,
        training: bool,
    ) -> Result<(Var, [Var; 6], Var)> {
        if training && pooled.rows() < 2 {
            return Err(Error::BatchTooSmall(pooled.rows()));
        }
        let vars = [
            self.w1.track(tape),
            self.b1.track(tape),
            self.gamma.track(tape),
            self.beta.track(tape),
            self.w2.track(tape),
            self.b2.track(tape),
        ];
        let [w1, b1, gamma, beta, w2, b2] = vars;
        let x = tape.leaf(pooled.clone());
        let h = tape.matmul(x, w1)?;
        let pre_bn = tape.add_bias(h, b1)?;
        let running = (!training).then(|| RunningStats {
            mean: &self.running_mean,
            var: &self.running_var,
        });
        let bn = tape.batch_norm(pre_bn, gamma, beta, self.eps, running)?;
        let act = tape.relu(bn);
        let out = tape.matmul(act, w2)?;
        let logits = tape.add_bias(out, b2)?;
        Ok((logits, vars, pre_bn))
    }

    fn update_running_stats(&mut self, pre_bn: &Matrix<T>) {
        let n = pre_bn.rows();
        let (mean, var) = batch_moments(pre_bn);
        let m = T::of_f64(self.momentum);
        let unbias = T::of_f64(n as f64 / (n as f64 - 1.0));
        for c in 0..mean.len() {
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * mean[c];
            self.running_var[c] = (T::one() - m) * self.running_var[c] + m * var[c] * unbias;
        }
    }

    /// Logits for a batch. Training mode normalizes with batch statistics
    /// and folds them into the running statistics.
    pub fn forward(&mut self, pooled: &Matrix<T>, training: bool) -> Result<Matrix<T>> {
        let mut tape = Tape::new();
        let (logits, _, pre_bn) = self.record(&mut tape, pooled, training)?;
        if training {
            let pre = tape.value(pre_bn).clone();
            self.update_running_stats(&pre);
        }
        Ok(tape.value(logits).clone())
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, pooled: &Matrix<T>) -> Result<Matrix<T>> {
        let mut tape = Tape::new();
        let (logits, _, _) = self.record(&mut tape, pooled, false)?;
        Ok(tape.value(logits).clone())
    }

    /// Training-mode mean cross-entropy, leaving running statistics alone.
    pub fn loss(&self, pooled: &Matrix<T>, labels: &[usize]) -> Result<T> {
        let mut tape = Tape::new();
        let (logits, _, _) = self.record(&mut tape, pooled, true)?;
        let loss = tape.softmax_cross_entropy(logits, labels, None)?;
        Ok(tape.value(loss).item())
    }

    /// One training-mode pass: accumulates gradients and updates running
    /// statistics.
    pub fn loss_and_accumulate(&mut self, pooled: &Matrix<T>, labels: &[usize]) -> Result<T> {
        let mut tape = Tape::new();
        let (logits, vars, pre_bn) = self.record(&mut tape, pooled, true)?;
        let loss = tape.softmax_cross_entropy(logits, labels, None)?;
        let grads = tape.backward(loss)?;
        for (p, v) in self.params_mut().into_iter().zip(vars) {
            p.accumulate_from(&grads, v);
        }
        let pre = tape.value(pre_bn).clone();
        self.update_running_stats(&pre);
        Ok(tape.value(loss).item())
    }

    /// Predicted class index per row (ties → lowest index).
    pub fn predict(&self, pooled: &Matrix<T>) -> Result<Vec<usize>> {
        Ok(self.logits(pooled)?.argmax_rows())
    }
}

/// Label for each row of `pooled` through the fixed class ordering.
pub fn classify<T: Real>(
    p: &MlpParams<T>,
    pooled: &Matrix<T>,
    classes: &ClassSpace,
) -> Result<Vec<PromptLabel>> {
    if p.classes() != classes.len() {
        return Err(Error::Shape {
            op: "classify",
            left: (1, p.classes()),
            right: (1, classes.len()),
        });
    }
    Ok(p.predict(pooled)?
        .into_iter()
        .map(|i| classes.label(i))
        .collect())
}

impl<T: Real> Parameters<T> for MlpParams<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![
            &self.w1,
            &self.b1,
            &self.gamma,
            &self.beta,
            &self.w2,
            &self.b2,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.gamma,
            &mut self.beta,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn training_batch_norm_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = MlpParams::<f64>::init(6, 16, 4, 1);
        let x = random(32, 6, &mut rng);
        let mut tape = Tape::new();
        let (_, [_, _, gamma, beta, ..], pre) = p.record(&mut tape, &x, true).unwrap();
        let bn = tape.batch_norm(pre, gamma, beta, p.eps, None).unwrap();
        let (mean, var) = batch_moments(tape.value(bn));
        let (_, pre_var) = batch_moments(tape.value(pre));
        for c in 0..16 {
            assert!(mean[c].abs() < 1e-5);
            let expected = pre_var[c] / (pre_var[c] + p.eps);
            assert!((var[c] - expected).abs() < 1e-9, "var {}", var[c]);
        }
    }

    #[test]
    fn eval_mode_with_unit_stats_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::<f64>::init(3, 8, 2, 2);
        let x = random(4, 3, &mut rng);
        let mut tape = Tape::new();
        let (_, [_, _, gamma, beta, ..], pre) = p.record(&mut tape, &x, false).unwrap();
        let stats = RunningStats {
            mean: &p.running_mean,
            var: &p.running_var,
        };
        let bn = tape
            .batch_norm(pre, gamma, beta, p.eps, Some(stats))
            .unwrap();
        let scale = 1.0 / (1.0 + p.eps).sqrt();
        for (a, b) in tape
            .value(bn)
            .as_slice()
            .iter()
            .zip(tape.value(pre).as_slice())
        {
            assert!((a - b * scale).abs() < 1e-12);
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0));
        }
    }

    #[test]
    fn forward_matches_step_by_step_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = MlpParams::<f64>::init(5, 7, 3, 3);
        p.running_mean = (0..7).map(|i| i as f64 * 0.1).collect();
        p.running_var = (0..7).map(|i| 0.5 + i as f64 * 0.2).collect();
        let x = random(4, 5, &mut rng);
        let got = p.logits(&x).unwrap();

        let h = x
            .matmul(&p.w1.value)
            .unwrap()
            .add_row_broadcast(&p.b1.value)
            .unwrap();
        let mut a = h.clone();
        for r in 0..4 {
            for c in 0..7 {
                let z = (h[(r, c)] - p.running_mean[c]) / (p.running_var[c] + p.eps).sqrt();
                a[(r, c)] = (z * p.gamma.value[(0, c)] + p.beta.value[(0, c)]).max(0.0);
            }
        }
        let want = a
            .matmul(&p.w2.value)
            .unwrap()
            .add_row_broadcast(&p.b2.value)
            .unwrap();
        for (x, y) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn training_needs_two_rows_and_updates_stats() {
        let mut p = MlpParams::<f64>::init(2, 4, 2, 0);
        assert!(matches!(
            p.forward(&Matrix::row_vector(&[1.0, 2.0]), true),
            Err(Error::BatchTooSmall(1))
        ));
        let before = p.running_mean.clone();
        p.forward(&Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]), true)
            .unwrap();
        assert_ne!(before, p.running_mean);
        assert!(p.running_var.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn classify_maps_through_class_space() {
        let classes = ClassSpace::new(["chat".to_string(), "pomme".to_string()]);
        let mut p = MlpParams::<f64>::init(1, 2, 3, 0);
        p.w2.value = Matrix::zeros(2, 3);
        let x = Matrix::row_vector(&[1.0]);
        p.b2.value = Matrix::row_vector(&[0.0, 0.0, 1.0]);
        assert_eq!(
            classify(&p, &x, &classes).unwrap(),
            vec![PromptLabel::Mispronounced]
        );
        p.b2.value = Matrix::row_vector(&[1.0, 0.0, 0.0]);
        assert_eq!(
            classify(&p, &x, &classes).unwrap(),
            vec![PromptLabel::word("chat")]
        );
        p.b2.value = Matrix::row_vector(&[0.5, 0.5, 0.5]);
        assert_eq!(
            classify(&p, &x, &classes).unwrap(),
            vec![PromptLabel::word("chat")]
        );
    }
}
