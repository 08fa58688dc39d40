//! Finite-difference audit of every analytic gradient in the toolkit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::ctc::{forward_backward, logit_gradient};
use crate::baselines::{ctc_loss, Alphabet, CtcParams, MlpParams};
use crate::error::Result;
use crate::matcher::MatcherParams;
use crate::numerics::gradcheck::{numeric_param_grads, FD_STEP};
use crate::numerics::{
    batch_moments, finite_difference_grad, max_relative_error, Matrix, Parameters,
};
use crate::seeding;

/// Acceptance bound on the worst relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

const MLP_HIDDEN: usize = 16;

/// Instances with a ReLU input closer to zero than this are redrawn, so
/// that no finite-difference probe straddles the kink.
const KINK_MARGIN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub model: String,
    pub seed: u64,
    pub param: String,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub tolerance: f64,
    pub checks: Vec<GradientCheck>,
}

impl GradientReport {
    /// Worst error per model, in first-seen order.
    pub fn worst_by_model(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for c in &self.checks {
            match out.iter_mut().find(|(m, _)| *m == c.model) {
                Some((_, e)) => *e = e.max(c.max_rel_error),
                None => out.push((c.model.clone(), c.max_rel_error)),
            }
        }
        out
    }

    pub fn max_error(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.max_rel_error < self.tolerance)
    }
}

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

fn push_params<M: Parameters<f64>>(
    out: &mut Vec<GradientCheck>,
    model: &str,
    seed: u64,
    names: &[&str],
    analytic: &M,
    numeric: &[Matrix<f64>],
) {
    for ((p, num), name) in analytic.params().iter().zip(numeric).zip(names) {
        out.push(GradientCheck {
            model: model.into(),
            seed,
            param: (*name).into(),
            max_rel_error: max_relative_error(&p.grad(), num),
        });
    }
}

fn check_matcher(seed: u64, out: &mut Vec<GradientCheck>) -> Result<()> {
    let mut rng = seeding::rng(seed, &[0x6C, 1]);
    let (n, da, dt, d) = (4, 6, 5, 3);
    let audio = random(n, da, &mut rng);
    let text = random(n, dt, &mut rng);
    let mut p = MatcherParams::<f64>::init(da, dt, d, seed);
    for b in [&mut p.b_audio, &mut p.b_text] {
        b.value = random(1, d, &mut rng);
    }
    p.s_audio.value[(0, 0)] = rng.random_range(0.5..2.5);
    p.s_text.value[(0, 0)] = rng.random_range(0.5..2.5);
    let numeric = numeric_param_grads(
        &p,
        |m| m.loss(&audio, &text, None).expect("valid shapes"),
        FD_STEP,
    );
    p.loss_and_accumulate(&audio, &text, None)?;
    let names = [
        "w_audio", "b_audio", "w_text", "b_text", "s_audio", "s_text",
    ];
    push_params(out, "matcher", seed, &names, &p, &numeric);
    Ok(())
}

/// Smallest |input| to the ReLU in training mode.
fn relu_margin(p: &MlpParams<f64>, x: &Matrix<f64>) -> Result<f64> {
    let pre = x.matmul(&p.w1.value)?.add_row_broadcast(&p.b1.value)?;
    let (mean, var) = batch_moments(&pre);
    let mut margin = f64::INFINITY;
    for r in 0..pre.rows() {
        for (c, &v) in pre.row(r).iter().enumerate() {
            let bn = p.gamma.value[(0, c)] * (v - mean[c]) / (var[c] + p.eps).sqrt()
                + p.beta.value[(0, c)];
            margin = margin.min(bn.abs());
        }
    }
    Ok(margin)
}

fn check_mlp(seed: u64, out: &mut Vec<GradientCheck>) -> Result<()> {
    let mut rng = seeding::rng(seed, &[0x6C, 2]);
    let (n, din, classes) = (6, 5, 4);
    let mut p = MlpParams::<f64>::init(din, MLP_HIDDEN, classes, seed);
    let (x, labels) = loop {
        let x = random(n, din, &mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        p.gamma.value = random(1, MLP_HIDDEN, &mut rng).map(|v| v + 1.5);
        p.beta.value = random(1, MLP_HIDDEN, &mut rng);
        if relu_margin(&p, &x)? > KINK_MARGIN {
            break (x, labels);
        }
    };
    let numeric = numeric_param_grads(&p, |m| m.loss(&x, &labels).expect("valid shapes"), FD_STEP);
    p.loss_and_accumulate(&x, &labels)?;
    let names = ["w1", "b1", "gamma", "beta", "w2", "b2"];
    push_params(out, "classifier", seed, &names, &p, &numeric);
    Ok(())
}

fn check_ctc(seed: u64, out: &mut Vec<GradientCheck>) -> Result<()> {
    let mut rng = seeding::rng(seed, &[0x6C, 3]);
    let alphabet = Alphabet::new(false);
    let v = alphabet.len();
    let frames = rng.random_range(6..10);
    let target: Vec<usize> = (0..rng.random_range(1..4))
        .map(|_| rng.random_range(1..v))
        .collect();

    let logits = random(frames, v, &mut rng).map(|x| 2.0 * x);
    let fb = forward_backward(&logits.log_softmax_rows(), &target)?;
    let analytic = logit_gradient(&logits.log_softmax_rows(), &fb.occupancy);
    let numeric = finite_difference_grad(
        |z| ctc_loss(&z.log_softmax_rows(), &target).expect("feasible target"),
        &logits,
        FD_STEP,
    );
    out.push(GradientCheck {
        model: "ctc".into(),
        seed,
        param: "logits".into(),
        max_rel_error: max_relative_error(&analytic, &numeric),
    });

    let din = 5;
    let x = random(frames, din, &mut rng);
    let mut p = CtcParams::<f64>::init(din, alphabet, seed);
    let batch = [(&x, target.as_slice())];
    let numeric = numeric_param_grads(
        &p,
        |m| m.batch_loss(&batch).expect("feasible target"),
        FD_STEP,
    );
    p.batch_loss_and_accumulate(&batch)?;
    push_params(out, "ctc", seed, &["w", "b"], &p, &numeric);
    Ok(())
}

/// Analytic against central-difference gradients (f64, step 1e-5) for the
/// matcher, the classifier (hidden width 16) and the CTC head, one random
/// instance per model and seed.
pub fn gradient_suite(seeds: &[u64]) -> Result<GradientReport> {
    let mut checks = Vec::new();
    for &seed in seeds {
        check_matcher(seed, &mut checks)?;
        check_mlp(seed, &mut checks)?;
        check_ctc(seed, &mut checks)?;
    }
    Ok(GradientReport {
        tolerance: GRADCHECK_TOLERANCE,
        checks,
    })
}
