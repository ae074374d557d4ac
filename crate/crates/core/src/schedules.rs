//! Step-size, scaling and momentum sequences.
//!
//! With the modernized parameterization `β_k = √(k+1)` and
//! `λ_k = η_k √(k+1)`, the effective SGD step `λ_k/β_k` equals `η_k`, and
//! dual averaging acts as SGD on `f + (α_k/2)‖x − x_0‖²` with a
//! regularization weight `α_k` that decays roughly like `1/k`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// `β_k = √(k+1)`.
pub fn beta(k: usize) -> f64 {
    sqrt((k + 1) as f64)
}

/// `λ_k = η_k √(k+1)`.
pub fn lambda(k: usize, eta_k: f64) -> f64 {
    eta_k * sqrt((k + 1) as f64)
}

/// Regularization weight of the modernized parameterization,
/// `α_k = (√(k+2) − √(k+1)) / (η_k √(k+2))`.
///
/// This is the coefficient indexed one step ahead of [`alpha_prop1`]:
/// `alpha_reg(k − 1, η) == alpha_prop1(k, ..)` for `k ≥ 1` under the same
/// sequences.
pub fn alpha_reg(k: usize, eta_k: f64) -> f64 {
    let a = sqrt((k + 2) as f64);
    let b = sqrt((k + 1) as f64);
    // √(k+2) − √(k+1) = 1/(√(k+2) + √(k+1)), which stays accurate at large k.
    (1.0 / (a + b)) / (eta_k * a)
}

/// The regularization weight that makes regularized SGD reproduce a dual
/// averaging step exactly: `α_k = (β_k − β_{k−1}) / λ_k`, with the
/// convention `β_{−1} := β_0` so that `α_0 = 0`.
pub fn alpha_prop1(k: usize, beta: impl Fn(usize) -> f64, lambda: impl Fn(usize) -> f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    (beta(k) - beta(k - 1)) / lambda(k)
}

/// The SGD-equivalent step of a dual averaging update, `λ_k/β_k`.
pub fn effective_lr(lambda_k: f64, beta_k: f64) -> f64 {
    lambda_k / beta_k
}

/// Nesterov's classical scaling recursion `β_{k+1} = β_k + 1/β_k`, first
/// `n` terms starting from `beta0`.
pub fn nesterov_betas(beta0: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut b = beta0;
    for _ in 0..n {
        out.push(b);
        b += 1.0 / b;
    }
    out
}

/// A stage of a stage-wise schedule: from step `at·T`, the multiplier moves
/// linearly to `multiplier` over `ramp·T` steps and then stays there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub at: f64,
    pub multiplier: f64,
    pub ramp: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum LrShape {
    #[default]
    Flat,
    StagewiseLinear(Vec<Stage>),
    /// Linear warmup over `warmup_steps`, then linear decay reaching zero at
    /// `total_steps`.
    WarmupLinearDecay {
        warmup_steps: usize,
        total_steps: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub base_lr: f64,
    pub lr_shape: LrShape,
    pub c0: f64,
    /// Raise `c_k` in proportion to learning-rate decreases, capped at 1.
    pub compensate_momentum: bool,
    pub total_steps: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            base_lr: 1.0,
            lr_shape: LrShape::Flat,
            c0: 1.0,
            compensate_momentum: false,
            total_steps: 1,
        }
    }
}

impl ScheduleSpec {
    pub fn flat(base_lr: f64, c0: f64, total_steps: usize) -> Self {
        ScheduleSpec {
            base_lr,
            c0,
            total_steps,
            ..Default::default()
        }
    }

    /// Flat `η_k = 1/√T` with constant `c`, as used by the MDA rate bound.
    pub fn theorem(total_steps: usize, c: f64) -> Self {
        Self::flat(1.0 / sqrt(total_steps as f64), c, total_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::param("base_lr", self.base_lr, "must be finite and > 0"));
        }
        if !(self.c0 > 0.0 && self.c0 <= 1.0) {
            return Err(Error::param("c0", self.c0, "must lie in (0, 1]"));
        }
        if self.total_steps == 0 {
            return Err(Error::param("total_steps", 0.0, "must be >= 1"));
        }
        match &self.lr_shape {
            LrShape::Flat => {}
            LrShape::StagewiseLinear(stages) => {
                let mut prev = 0.0;
                for s in stages {
                    if !(0.0..=1.0).contains(&s.at) || s.at < prev {
                        return Err(Error::param(
                            "stage.at",
                            s.at,
                            "stage starts must be ascending fractions in [0, 1]",
                        ));
                    }
                    if !(s.multiplier > 0.0) || !s.multiplier.is_finite() {
                        return Err(Error::param("stage.multiplier", s.multiplier, "must be > 0"));
                    }
                    if !(s.ramp >= 0.0) || s.ramp > 1.0 {
                        return Err(Error::param("stage.ramp", s.ramp, "must lie in [0, 1]"));
                    }
                    prev = s.at;
                }
            }
            LrShape::WarmupLinearDecay {
                warmup_steps,
                total_steps,
            } => {
                if *warmup_steps == 0 {
                    return Err(Error::param("warmup_steps", 0.0, "must be >= 1"));
                }
                if total_steps <= warmup_steps {
                    return Err(Error::param(
                        "decay_steps",
                        *total_steps as f64,
                        "must exceed warmup_steps",
                    ));
                }
                if *total_steps < self.total_steps {
                    return Err(Error::param(
                        "decay_steps",
                        *total_steps as f64,
                        "must be >= the run length so that eta_k stays positive",
                    ));
                }
            }
        }
        Ok(())
    }

    /// `η_k`.
    pub fn lr(&self, k: usize) -> f64 {
        self.base_lr * self.multiplier(k)
    }

    fn multiplier(&self, k: usize) -> f64 {
        match &self.lr_shape {
            LrShape::Flat => 1.0,
            LrShape::StagewiseLinear(stages) => {
                let t = self.total_steps as f64;
                let k = k as f64;
                let mut current = 1.0;
                for s in stages {
                    let start = s.at * t;
                    let ramp = s.ramp * t;
                    if k < start {
                        break;
                    }
                    if ramp > 0.0 && k < start + ramp {
                        let frac = (k - start) / ramp;
                        return current + (s.multiplier - current) * frac;
                    }
                    current = s.multiplier;
                }
                current
            }
            LrShape::WarmupLinearDecay {
                warmup_steps,
                total_steps,
            } => {
                let (w, n) = (*warmup_steps, *total_steps);
                if k < w {
                    (k + 1) as f64 / w as f64
                } else {
                    n.saturating_sub(k) as f64 / (n - w) as f64
                }
            }
        }
    }

    /// `c_k`; see [`momentum_schedule`].
    pub fn momentum(&self, k: usize) -> f64 {
        momentum_schedule(self, k)
    }
}

/// Momentum parameter `c_k`. With compensation on, `c_k = min(1, c0·η/η_k)`
/// where `η` is the base (peak) learning rate.
pub fn momentum_schedule(spec: &ScheduleSpec, k: usize) -> f64 {
    if !spec.compensate_momentum {
        return spec.c0;
    }
    let ratio = spec.base_lr / spec.lr(k);
    (spec.c0 * ratio).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn beta_and_lambda_values() {
        assert_eq!(beta(0), 1.0);
        assert_eq!(beta(3), 2.0);
        assert_eq!(beta(99), 10.0);
        assert_eq!(lambda(0, 0.5), 0.5);
        assert_eq!(lambda(3, 1.0), 2.0);
        assert_eq!(lambda(8, 2.0), 6.0);
    }

    #[test]
    fn alpha_reg_values() {
        // (√2 − 1)/√2
        let expected = (2f64.sqrt() - 1.0) / 2f64.sqrt();
        assert_relative_eq!(alpha_reg(0, 1.0), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 0.2928932, epsilon = 1e-7);
        for k in [0, 1, 17, 1000] {
            assert_relative_eq!(alpha_reg(k, 2.0), 0.5 * alpha_reg(k, 1.0), max_relative = 1e-15);
        }
        let k = 1_000_000;
        let approx = 1.0 / (2.0 * (k as f64 + 2.0));
        assert!((alpha_reg(k, 1.0) - approx).abs() / approx < 0.03);
    }

    #[test]
    fn alpha_prop1_values() {
        let eta = 1.0;
        let b = |k: usize| beta(k);
        let l = |k: usize| lambda(k, eta);
        assert_eq!(alpha_prop1(0, b, l), 0.0);
        assert_relative_eq!(alpha_prop1(1, b, l), 0.2928932, epsilon = 1e-7);
        for eta in [0.1, 1.0, 3.0] {
            for k in 1..=1000 {
                let p = alpha_prop1(k, beta, |j| lambda(j, eta));
                assert_relative_eq!(p, alpha_reg(k - 1, eta), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn effective_lr_is_flat_eta() {
        for k in 0..50 {
            assert_relative_eq!(effective_lr(lambda(k, 0.3), beta(k)), 0.3, max_relative = 1e-15);
        }
        assert_eq!(effective_lr(0.5, 1.0), 0.5);
    }

    #[test]
    fn effective_lr_halves_with_stage() {
        let spec = ScheduleSpec {
            base_lr: 0.8,
            lr_shape: LrShape::StagewiseLinear(alloc::vec![Stage {
                at: 0.5,
                multiplier: 0.5,
                ramp: 0.0
            }]),
            total_steps: 100,
            ..Default::default()
        };
        let before = effective_lr(lambda(49, spec.lr(49)), beta(49));
        let after = effective_lr(lambda(50, spec.lr(50)), beta(50));
        assert_relative_eq!(after, 0.5 * before, max_relative = 1e-14);
    }

    #[test]
    fn stagewise_ramp_is_linear() {
        let spec = ScheduleSpec {
            base_lr: 1.0,
            lr_shape: LrShape::StagewiseLinear(alloc::vec![
                Stage { at: 0.5, multiplier: 0.1, ramp: 0.1 },
                Stage { at: 0.8, multiplier: 0.01, ramp: 0.0 },
            ]),
            total_steps: 100,
            ..Default::default()
        };
        spec.validate().unwrap();
        assert_eq!(spec.lr(49), 1.0);
        assert_relative_eq!(spec.lr(55), 0.55, max_relative = 1e-14);
        assert_relative_eq!(spec.lr(60), 0.1, max_relative = 1e-14);
        assert_relative_eq!(spec.lr(79), 0.1, max_relative = 1e-14);
        assert_relative_eq!(spec.lr(80), 0.01, max_relative = 1e-14);
    }

    #[test]
    fn warmup_then_decay_stays_positive() {
        let spec = ScheduleSpec {
            base_lr: 2.0,
            lr_shape: LrShape::WarmupLinearDecay { warmup_steps: 10, total_steps: 100 },
            total_steps: 100,
            ..Default::default()
        };
        spec.validate().unwrap();
        assert_relative_eq!(spec.lr(0), 0.2);
        assert_relative_eq!(spec.lr(9), 2.0);
        assert_relative_eq!(spec.lr(10), 2.0);
        assert!((0..100).all(|k| spec.lr(k) > 0.0));
        assert_relative_eq!(spec.lr(99), 2.0 / 90.0);
    }

    #[test]
    fn momentum_compensation() {
        let mut spec = ScheduleSpec {
            base_lr: 1.0,
            c0: 0.1,
            compensate_momentum: true,
            lr_shape: LrShape::StagewiseLinear(alloc::vec![Stage { at: 0.5, multiplier: 0.1, ramp: 0.0 }]),
            total_steps: 10,
        };
        assert_eq!(momentum_schedule(&spec, 0), 0.1);
        assert_eq!(momentum_schedule(&spec, 7), 1.0);
        spec.compensate_momentum = false;
        assert!((0..10).all(|k| momentum_schedule(&spec, k) == 0.1));
    }

    #[test]
    fn nesterov_recursion() {
        let b = nesterov_betas(1.0, 3);
        assert_eq!(b, alloc::vec![1.0, 2.0, 2.5]);
    }

    #[test]
    fn validate_rejects() {
        assert!(ScheduleSpec::flat(0.0, 0.5, 10).validate().is_err());
        assert!(ScheduleSpec::flat(1.0, 0.0, 10).validate().is_err());
        assert!(ScheduleSpec::flat(1.0, 1.5, 10).validate().is_err());
        let spec = ScheduleSpec {
            lr_shape: LrShape::WarmupLinearDecay { warmup_steps: 5, total_steps: 8 },
            total_steps: 10,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }
}
