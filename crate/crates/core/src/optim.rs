//! Adam and AdamW with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Param, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    /// Adam with decoupled weight decay.
    AdamW,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Only used by AdamW.
    pub weight_decay: f64,
    /// Skip decay on 1×1 parameters (the logit scales).
    pub exempt_scalars: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            exempt_scalars: false,
        }
    }
}

impl OptimConfig {
    pub fn adam(lr: f64) -> Self {
        OptimConfig {
            kind: OptimizerKind::Adam,
            lr,
            ..Default::default()
        }
    }

    pub fn adamw(lr: f64) -> Self {
        OptimConfig {
            kind: OptimizerKind::AdamW,
            lr,
            ..Default::default()
        }
    }
}

/// Moment estimates for an ordered parameter list.
#[derive(Clone, Debug)]
pub struct OptimState<T> {
    pub config: OptimConfig,
    pub step: u64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Real> OptimState<T> {
    pub fn new(config: OptimConfig) -> Self {
        OptimState {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn first_moments(&self) -> &[Matrix<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Matrix<T>] {
        &self.v
    }

    /// Applies one update using each parameter's accumulated gradient.
    /// Parameters must be passed in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        let grads: Vec<Matrix<T>> = params.iter().map(|p| p.grad()).collect();
        for (i, g) in grads.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite gradient in parameter {i}"
                )));
            }
            if g.shape() != self.m[i].shape() {
                return Err(Error::Shape {
                    op: "optimizer step",
                    left: self.m[i].shape(),
                    right: g.shape(),
                });
            }
        }

        let c = &self.config;
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of_f64(c.beta1), T::of_f64(c.beta2));
        let one = T::one();
        let lr = T::of_f64(c.lr);
        let eps = T::of_f64(c.eps);
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let decay = match c.kind {
            OptimizerKind::AdamW => T::of_f64(c.lr * c.weight_decay),
            OptimizerKind::Adam => T::zero(),
        };

        for (i, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
            let decays = decay != T::zero() && !(c.exempt_scalars && p.is_scalar());
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            for (j, (theta, &gj)) in p
                .value
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .enumerate()
            {
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                if decays {
                    *theta = *theta - decay * *theta;
                }
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step<T: Real>(state: &mut OptimState<T>, params: &mut [&mut Param<T>]) -> Result<()> {
    debug_assert_eq!(state.config.kind, OptimizerKind::Adam);
    state.step(params)
}

pub fn adamw_step<T: Real>(state: &mut OptimState<T>, params: &mut [&mut Param<T>]) -> Result<()> {
    debug_assert_eq!(state.config.kind, OptimizerKind::AdamW);
    state.step(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn param_with_grad(value: &[f64], grad: &[f64]) -> Param<f64> {
        let mut p = Param::new(Matrix::row_vector(value));
        p.accumulate(&Matrix::row_vector(grad));
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = OptimState::new(OptimConfig::adam(0.1));
        let mut p = param_with_grad(&[1.0, -2.0], &[0.0, 0.0]);
        adam_step(&mut s, &mut [&mut p]).unwrap();
        assert_eq!(p.value.as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut s = OptimState::new(OptimConfig::adam(0.1));
        let mut p = param_with_grad(&[0.0], &[4.0]);
        adam_step(&mut s, &mut [&mut p]).unwrap();
        let expected = -0.1 * 4.0 / (4.0 + 1e-8);
        assert!((p.value.item() - expected).abs() < 1e-12);
        assert!((p.value.item() + 0.1).abs() < 1e-8);
    }

    #[test]
    fn two_steps_match_reference_recurrence() {
        let cfg = OptimConfig::adam(0.01);
        let mut s = OptimState::new(cfg.clone());
        let mut p = param_with_grad(&[0.5], &[0.3]);
        adam_step(&mut s, &mut [&mut p]).unwrap();
        adam_step(&mut s, &mut [&mut p]).unwrap();

        // hand-rolled reference
        let (mut theta, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 0.3;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            theta -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
        assert!((p.value.item() - theta).abs() < 1e-9);
    }

    #[test]
    fn adamw_reduces_to_adam_without_decay() {
        let mut a = OptimState::new(OptimConfig::adam(0.05));
        let mut w = OptimState::new(OptimConfig {
            weight_decay: 0.0,
            ..OptimConfig::adamw(0.05)
        });
        let mut pa = param_with_grad(&[0.7, -1.3], &[0.2, -5.0]);
        let mut pw = pa.clone();
        for _ in 0..3 {
            adam_step(&mut a, &mut [&mut pa]).unwrap();
            adamw_step(&mut w, &mut [&mut pw]).unwrap();
        }
        let bits = |p: &Param<f64>| {
            p.value
                .as_slice()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&pa), bits(&pw));
    }

    #[test]
    fn decay_only_recurrence() {
        let mut s = OptimState::new(OptimConfig::adamw(0.1));
        let mut p = param_with_grad(&[2.0], &[0.0]);
        for k in 1..=5 {
            adamw_step(&mut s, &mut [&mut p]).unwrap();
            assert!((p.value.item() - 2.0 * 0.999f64.powi(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn adamw_first_step_is_adam_plus_decay() {
        let mut a = OptimState::new(OptimConfig::adam(0.1));
        let mut w = OptimState::new(OptimConfig::adamw(0.1));
        let mut pa = param_with_grad(&[1.5], &[0.8]);
        let mut pw = pa.clone();
        adam_step(&mut a, &mut [&mut pa]).unwrap();
        adamw_step(&mut w, &mut [&mut pw]).unwrap();
        assert!((pw.value.item() - (pa.value.item() - 0.1 * 0.01 * 1.5)).abs() < 1e-9);
    }

    #[test]
    fn exempt_scalars_skips_decay() {
        let mut s = OptimState::new(OptimConfig {
            exempt_scalars: true,
            ..OptimConfig::adamw(0.1)
        });
        let mut scalar = param_with_grad(&[2.0], &[0.0]);
        let mut vector = param_with_grad(&[2.0, 2.0], &[0.0, 0.0]);
        adamw_step(&mut s, &mut [&mut scalar, &mut vector]).unwrap();
        assert_eq!(scalar.value.item(), 2.0);
        assert!(vector.value.item() < 2.0);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut s = OptimState::new(OptimConfig::adam(0.1));
        let mut p = param_with_grad(&[1.0], &[f64::NAN]);
        assert!(matches!(
            adam_step(&mut s, &mut [&mut p]),
            Err(Error::Diverged(_))
        ));
    }

    proptest! {
        #[test]
        fn first_step_bounded_by_lr(g in prop::collection::vec(-1e6f64..1e6, 1..8), lr in 1e-6f64..1.0) {
            let mut s = OptimState::new(OptimConfig::adam(lr));
            let zeros = vec![0.0; g.len()];
            let mut p = param_with_grad(&zeros, &g);
            adam_step(&mut s, &mut [&mut p]).unwrap();
            for &v in p.value.as_slice() {
                prop_assert!(v.abs() <= lr * (1.0 + 1e-9));
            }
        }

        #[test]
        fn zero_betas_give_sign_like_update(g in prop::collection::vec(-10.0f64..10.0, 1..6)) {
            let mut s = OptimState::new(OptimConfig { beta1: 0.0, beta2: 0.0, ..OptimConfig::adam(0.1) });
            let zeros = vec![0.0; g.len()];
            let mut p = param_with_grad(&zeros, &g);
            adam_step(&mut s, &mut [&mut p]).unwrap();
            for (&v, &gi) in p.value.as_slice().iter().zip(&g) {
                prop_assert!((v - (-0.1 * gi / (gi.abs() + 1e-8))).abs() < 1e-12);
            }
        }

        #[test]
        fn steps_are_deterministic(g in prop::collection::vec(-10.0f64..10.0, 1..6)) {
            let run = || {
                let mut s = OptimState::new(OptimConfig::adamw(0.01));
                let zeros = vec![0.3; g.len()];
                let mut p = param_with_grad(&zeros, &g);
                adamw_step(&mut s, &mut [&mut p]).unwrap();
                adamw_step(&mut s, &mut [&mut p]).unwrap();
                p.value.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }
    }
}
