//! Step functions.
//!
//! Every state owns its iterate `x` and exposes `step(&mut self, g, ..)`,
//! which reads the gradient `g` without modifying it. A non-finite gradient
//! or a non-finite resulting iterate is reported as [`Error::NonFinite`] and
//! leaves the state at its last finite value.

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::schedules;
use crate::vector::Vector;

fn check_grad(g: &Vector, n: usize, step: usize) -> Result<()> {
    if g.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: g.len(),
        });
    }
    if !g.is_finite() {
        return Err(Error::NonFinite {
            what: "gradient",
            step,
        });
    }
    Ok(())
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, v, "must be finite and > 0"))
    }
}

fn unit_interval(name: &'static str, c: f64) -> Result<()> {
    if c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, c, "must lie in (0, 1]"))
    }
}

fn commit(target: &mut Vector, candidate: Vector, what: &'static str, step: usize) -> Result<()> {
    if !candidate.is_finite() {
        return Err(Error::NonFinite { what, step });
    }
    *target = candidate;
    Ok(())
}

/// Dual averaging with the mirror map `½‖x − x_0‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DaState {
    /// Weighted gradient sum `s_k`.
    pub s: Vector,
    pub x0: Vector,
    pub x: Vector,
    pub k: usize,
}

impl DaState {
    pub fn new(x0: Vector) -> Self {
        DaState {
            s: Vector::zeros(x0.len()),
            x: x0.clone(),
            x0,
            k: 0,
        }
    }

    /// `s ← s + λ_k g`, then the closed-form proximal step `x ← x_0 − s/β_k`.
    pub fn step(&mut self, g: &Vector, lambda_k: f64, beta_k: f64) -> Result<()> {
        check_grad(g, self.x.len(), self.k)?;
        positive("lambda_k", lambda_k)?;
        positive("beta_k", beta_k)?;
        let mut s = self.s.clone();
        s.axpy_in_place(lambda_k, g);
        let x = prox(&self.x0, &s, beta_k);
        if !s.is_finite() {
            return Err(Error::NonFinite {
                what: "gradient sum",
                step: self.k,
            });
        }
        commit(&mut self.x, x, "iterate", self.k)?;
        self.s = s;
        self.k += 1;
        Ok(())
    }
}

/// `x_0 − s/β`.
fn prox(x0: &Vector, s: &Vector, beta: f64) -> Vector {
    x0.iter().zip(s.iter()).map(|(a, b)| a - b / beta).collect()
}

pub fn da_step(state: &mut DaState, g: &Vector, lambda_k: f64, beta_k: f64) -> Result<()> {
    state.step(g, lambda_k, beta_k)
}

/// Dual averaging iterate `z` plus the averaged iterate `x` at which
/// gradients are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct MdaState {
    pub s: Vector,
    pub z: Vector,
    pub x: Vector,
    pub x0: Vector,
    pub k: usize,
}

impl MdaState {
    pub fn new(x0: Vector) -> Self {
        MdaState {
            s: Vector::zeros(x0.len()),
            z: x0.clone(),
            x: x0.clone(),
            x0,
            k: 0,
        }
    }

    /// One modernized step with `β_k = √(k+1)` and `λ_k = η_k √(k+1)`.
    pub fn step(&mut self, g: &Vector, eta_k: f64, c_next: f64) -> Result<()> {
        positive("eta_k", eta_k)?;
        let root = sqrt((self.k + 1) as f64);
        self.step_with(g, eta_k * root, root, c_next)
    }

    /// Averaged dual averaging step with caller-supplied `λ_k`, `β_k`.
    pub fn step_with(&mut self, g: &Vector, lambda_k: f64, beta_k: f64, c_next: f64) -> Result<()> {
        check_grad(g, self.x.len(), self.k)?;
        positive("lambda_k", lambda_k)?;
        positive("beta_k", beta_k)?;
        unit_interval("c_next", c_next)?;
        let mut s = self.s.clone();
        s.axpy_in_place(lambda_k, g);
        let z = prox(&self.x0, &s, beta_k);
        let x: Vector = self
            .x
            .iter()
            .zip(z.iter())
            .map(|(x, z)| (1.0 - c_next) * x + c_next * z)
            .collect();
        if !z.is_finite() {
            return Err(Error::NonFinite {
                what: "dual iterate",
                step: self.k,
            });
        }
        commit(&mut self.x, x, "iterate", self.k)?;
        self.z = z;
        self.s = s;
        self.k += 1;
        Ok(())
    }
}

pub fn mda_step(state: &mut MdaState, g: &Vector, eta_k: f64, c_next: f64) -> Result<()> {
    state.step(g, eta_k, c_next)
}

/// `x − η_k g`.
pub fn sgd_step(x: &Vector, g: &Vector, eta_k: f64) -> Result<Vector> {
    check_grad(g, x.len(), 0)?;
    positive("eta_k", eta_k)?;
    let out: Vector = x.iter().zip(g.iter()).map(|(x, g)| x - eta_k * g).collect();
    if !out.is_finite() {
        return Err(Error::NonFinite {
            what: "iterate",
            step: 0,
        });
    }
    Ok(out)
}

/// SGD on `f + (α_k/2)‖x − x_0‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegSgdState {
    pub x: Vector,
    pub x0: Vector,
    pub k: usize,
}

impl RegSgdState {
    pub fn new(x0: Vector) -> Self {
        RegSgdState {
            x: x0.clone(),
            x0,
            k: 0,
        }
    }

    /// `x ← x − η_k g − η_k α_k (x − x_0)`.
    pub fn step(&mut self, g: &Vector, eta_k: f64, alpha_k: f64) -> Result<()> {
        check_grad(g, self.x.len(), self.k)?;
        positive("eta_k", eta_k)?;
        if !(alpha_k >= 0.0) || !alpha_k.is_finite() {
            return Err(Error::param("alpha_k", alpha_k, "must be finite and >= 0"));
        }
        let shrink = eta_k * alpha_k;
        let x: Vector = self
            .x
            .iter()
            .zip(g.iter())
            .zip(self.x0.iter())
            .map(|((x, g), x0)| x - eta_k * g - shrink * (x - x0))
            .collect();
        commit(&mut self.x, x, "iterate", self.k)?;
        self.k += 1;
        Ok(())
    }
}

pub fn reg_sgd_step(state: &mut RegSgdState, g: &Vector, eta_k: f64, alpha_k: f64) -> Result<()> {
    state.step(g, eta_k, alpha_k)
}

/// Heavy-ball SGD in buffer form.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdmState {
    pub m: Vector,
    pub x: Vector,
    pub k: usize,
}

impl SgdmState {
    pub fn new(x0: Vector) -> Self {
        SgdmState {
            m: Vector::zeros(x0.len()),
            x: x0,
            k: 0,
        }
    }

    /// `m ← βm + g`, `x ← x − αm`.
    pub fn step(&mut self, g: &Vector, alpha: f64, beta: f64) -> Result<()> {
        check_grad(g, self.x.len(), self.k)?;
        positive("alpha", alpha)?;
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::param("beta", beta, "must lie in [0, 1)"));
        }
        let m: Vector = self.m.iter().zip(g.iter()).map(|(m, g)| beta * m + g).collect();
        let x: Vector = self.x.iter().zip(m.iter()).map(|(x, m)| x - alpha * m).collect();
        commit(&mut self.x, x, "iterate", self.k)?;
        self.m = m;
        self.k += 1;
        Ok(())
    }
}

pub fn sgdm_step(state: &mut SgdmState, g: &Vector, alpha: f64, beta: f64) -> Result<()> {
    state.step(g, alpha, beta)
}

/// Stochastic primal averaging: an SGD sequence `z` and its running
/// average `x`, where gradients are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaState {
    pub z: Vector,
    pub x: Vector,
    pub k: usize,
}

impl SpaState {
    pub fn new(x0: Vector) -> Self {
        SpaState {
            z: x0.clone(),
            x: x0,
            k: 0,
        }
    }

    /// `z ← z − ηg`, `x ← (1 − c)x + cz`.
    pub fn step(&mut self, g: &Vector, eta: f64, c: f64) -> Result<()> {
        check_grad(g, self.x.len(), self.k)?;
        positive("eta", eta)?;
        unit_interval("c", c)?;
        let z: Vector = self.z.iter().zip(g.iter()).map(|(z, g)| z - eta * g).collect();
        let x: Vector = self
            .x
            .iter()
            .zip(z.iter())
            .map(|(x, z)| (1.0 - c) * x + c * z)
            .collect();
        if !z.is_finite() {
            return Err(Error::NonFinite {
                what: "primal sequence",
                step: self.k,
            });
        }
        commit(&mut self.x, x, "iterate", self.k)?;
        self.z = z;
        self.k += 1;
        Ok(())
    }
}

pub fn spa_step(state: &mut SpaState, g: &Vector, eta: f64, c: f64) -> Result<()> {
    state.step(g, eta, c)
}

/// Maps SGD+M `(α, β)` to SPA `(η, c) = (α/(1−β), 1−β)`. Started from
/// `z_0 = x_0`, `m_0 = 0` and fed the same gradients, both produce the same
/// `x` sequence.
pub fn spa_params_from_sgdm(alpha: f64, beta: f64) -> Result<(f64, f64)> {
    positive("alpha", alpha)?;
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::param("beta", beta, "must lie in [0, 1)"));
    }
    let c = 1.0 - beta;
    Ok((alpha / c, c))
}

/// Inverse of [`spa_params_from_sgdm`]: `(α, β) = (cη, 1 − c)`.
pub fn sgdm_params_from_spa(eta: f64, c: f64) -> (f64, f64) {
    (c * eta, 1.0 - c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vector,
    pub v: Vector,
    pub x: Vector,
    pub k: usize,
    // β₁ᵏ and β₂ᵏ, kept as running products.
    beta1_pow: f64,
    beta2_pow: f64,
}

impl AdamState {
    pub fn new(x0: Vector) -> Self {
        let n = x0.len();
        AdamState {
            m: Vector::zeros(n),
            v: Vector::zeros(n),
            x: x0,
            k: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    pub fn step(&mut self, g: &Vector, p: AdamParams) -> Result<()> {
        check_grad(g, self.x.len(), self.k)?;
        positive("lr", p.lr)?;
        positive("eps", p.eps)?;
        if !(0.0..1.0).contains(&p.beta1) {
            return Err(Error::param("beta1", p.beta1, "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&p.beta2) {
            return Err(Error::param("beta2", p.beta2, "must lie in [0, 1)"));
        }
        let b1 = self.beta1_pow * p.beta1;
        let b2 = self.beta2_pow * p.beta2;
        let m: Vector = self
            .m
            .iter()
            .zip(g.iter())
            .map(|(m, g)| p.beta1 * m + (1.0 - p.beta1) * g)
            .collect();
        let v: Vector = self
            .v
            .iter()
            .zip(g.iter())
            .map(|(v, g)| p.beta2 * v + (1.0 - p.beta2) * g * g)
            .collect();
        let x: Vector = self
            .x
            .iter()
            .zip(m.iter().zip(v.iter()))
            .map(|(x, (m, v))| {
                let m_hat = m / (1.0 - b1);
                let v_hat = v / (1.0 - b2);
                x - p.lr * m_hat / (sqrt(v_hat) + p.eps)
            })
            .collect();
        commit(&mut self.x, x, "iterate", self.k)?;
        self.m = m;
        self.v = v;
        self.beta1_pow = b1;
        self.beta2_pow = b2;
        self.k += 1;
        Ok(())
    }
}

pub fn adam_step(state: &mut AdamState, g: &Vector, params: AdamParams) -> Result<()> {
    state.step(g, params)
}

/// `α_k` that [`RegSgdState`] needs to track [`DaState`] under the
/// modernized sequences with a flat `η`.
pub fn reg_sgd_alpha(k: usize, eta: f64) -> f64 {
    schedules::alpha_prop1(k, schedules::beta, |j| schedules::lambda(j, eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use approx::assert_relative_eq;

    fn v1(x: f64) -> Vector {
        Vector::from([x])
    }

    #[test]
    fn da_single_step_on_half_square() {
        let mut st = DaState::new(v1(1.0));
        st.step(&v1(1.0), 0.5, 1.0).unwrap();
        assert_eq!(st.x, v1(0.5));
    }

    #[test]
    fn da_zero_gradient_fixed_point() {
        let mut st = DaState::new(Vector::from([0.3, -2.0]));
        for k in 0..20 {
            st.step(&Vector::zeros(2), schedules::lambda(k, 0.7), schedules::beta(k)).unwrap();
        }
        assert_eq!(st.x, st.x0);
    }

    #[test]
    fn da_two_steps_with_sqrt_beta() {
        let mut st = DaState::new(v1(0.0));
        st.step(&v1(1.0), 1.0, 1.0).unwrap();
        st.step(&v1(1.0), 1.0, 2f64.sqrt()).unwrap();
        assert_eq!(st.s, v1(2.0));
        assert_relative_eq!(st.x[0], -(2f64.sqrt()), max_relative = 1e-15);
    }

    #[test]
    fn da_rejects_non_finite_gradient() {
        let mut st = DaState::new(v1(1.0));
        let err = st.step(&v1(f64::NAN), 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(st.x, v1(1.0));
        assert_eq!(st.k, 0);
    }

    #[test]
    fn mda_hand_step() {
        let mut st = MdaState::new(v1(1.0));
        st.step(&v1(1.0), 0.5, 0.5).unwrap();
        assert_eq!(st.z, v1(0.5));
        assert_eq!(st.x, v1(0.75));
    }

    #[test]
    fn mda_rejects_zero_c() {
        let mut st = MdaState::new(v1(1.0));
        assert!(st.step(&v1(1.0), 0.5, 0.0).is_err());
    }

    #[test]
    fn mda_with_unit_c_is_da() {
        let mut mda = MdaState::new(Vector::from([1.0, -1.0]));
        let mut da = DaState::new(Vector::from([1.0, -1.0]));
        for k in 0..50 {
            let g: Vector = mda.x.iter().map(|x| 3.0 * x - 0.2).collect();
            let gd: Vector = da.x.iter().map(|x| 3.0 * x - 0.2).collect();
            mda.step(&g, 0.1, 1.0).unwrap();
            da.step(&gd, schedules::lambda(k, 0.1), schedules::beta(k)).unwrap();
            assert_eq!(mda.x, da.x);
        }
    }

    #[test]
    fn sgd_cases() {
        assert_eq!(sgd_step(&v1(1.0), &v1(1.0), 0.5).unwrap(), v1(0.5));
        assert_eq!(sgd_step(&v1(3.0), &v1(0.0), 0.5).unwrap(), v1(3.0));
        let mut x = v1(1.0);
        for k in 1..=30 {
            x = sgd_step(&x, &x.clone(), 0.5).unwrap();
            assert_eq!(x[0], 0.5f64.powi(k));
        }
    }

    #[test]
    fn reg_sgd_degenerate_cases() {
        let x0 = Vector::from([0.5, 1.0]);
        let mut st = RegSgdState::new(x0.clone());
        st.x = Vector::from([2.0, -1.0]);
        let g = Vector::from([0.1, 0.2]);
        let plain = sgd_step(&st.x, &g, 0.3).unwrap();
        let mut st0 = st.clone();
        st0.step(&g, 0.3, 0.0).unwrap();
        assert_eq!(st0.x, plain);

        let mut at_x0 = RegSgdState::new(x0.clone());
        at_x0.step(&g, 0.3, 123.0).unwrap();
        assert_eq!(at_x0.x, sgd_step(&x0, &g, 0.3).unwrap());
    }

    #[test]
    fn sgdm_cases() {
        let mut st = SgdmState::new(v1(1.0));
        st.step(&v1(1.0), 0.1, 0.9).unwrap();
        assert_eq!(st.m, v1(1.0));
        assert_relative_eq!(st.x[0], 0.9);

        let mut a = SgdmState::new(Vector::from([1.0, 2.0]));
        let mut x = Vector::from([1.0, 2.0]);
        for _ in 0..10 {
            let g: Vector = a.x.iter().map(|v| v * v).collect();
            let gs: Vector = x.iter().map(|v| v * v).collect();
            a.step(&g, 0.05, 0.0).unwrap();
            x = sgd_step(&x, &gs, 0.05).unwrap();
            assert_eq!(a.x, x);
        }
    }

    #[test]
    fn sgdm_buffer_converges_geometrically() {
        let beta = 0.8;
        let mut st = SgdmState::new(v1(0.0));
        let mut gaps = Vec::new();
        for _ in 0..60 {
            st.step(&v1(2.0), 1e-3, beta).unwrap();
            gaps.push((st.m[0] - 2.0 / (1.0 - beta)).abs());
        }
        for w in gaps.windows(2) {
            assert_relative_eq!(w[1], beta * w[0], max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn spa_cases() {
        let mut st = SpaState::new(v1(1.0));
        st.step(&v1(1.0), 1.0, 0.1).unwrap();
        assert_eq!(st.z, v1(0.0));
        assert_relative_eq!(st.x[0], 0.9);

        let mut s1 = SpaState::new(v1(2.0));
        for _ in 0..5 {
            let g = v1(s1.x[0] - 1.0);
            s1.step(&g, 0.4, 1.0).unwrap();
            assert_eq!(s1.x, s1.z);
        }

        let mut frozen = SpaState::new(v1(0.0));
        frozen.x = v1(1.0);
        frozen.z = v1(3.0);
        let c = 0.25;
        for _ in 0..40 {
            let prev = frozen.x[0] - 3.0;
            frozen.step(&v1(0.0), 1.0, c).unwrap();
            assert_relative_eq!(frozen.x[0] - 3.0, (1.0 - c) * prev, max_relative = 1e-12);
        }
    }

    #[test]
    fn spa_param_map() {
        let (eta, c) = spa_params_from_sgdm(0.1, 0.9).unwrap();
        assert_relative_eq!(eta, 1.0, max_relative = 1e-15);
        assert_relative_eq!(c, 0.1, max_relative = 1e-15);
        assert_eq!(spa_params_from_sgdm(0.3, 0.0).unwrap(), (0.3, 1.0));
        assert!(spa_params_from_sgdm(0.1, 1.0).is_err());
        let (a, b) = sgdm_params_from_spa(eta, c);
        assert_relative_eq!(a, 0.1, max_relative = 1e-15);
        assert_relative_eq!(b, 0.9, max_relative = 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut st = AdamState::new(v1(0.0));
        st.step(&v1(1.0), AdamParams::default()).unwrap();
        assert_relative_eq!(st.x[0], -0.001 / (1.0 + 1e-8), max_relative = 1e-12);
    }

    #[test]
    fn adam_zero_gradient_no_move() {
        let mut st = AdamState::new(Vector::from([0.4, -0.2]));
        st.step(&Vector::zeros(2), AdamParams::default()).unwrap();
        assert_eq!(st.x, Vector::from([0.4, -0.2]));
    }

    #[test]
    fn adam_scale_invariance() {
        let grad = |x: &Vector, scale: f64| -> Vector {
            x.iter().enumerate().map(|(i, v)| scale * ((i + 1) as f64 * v - 1.0)).collect()
        };
        let x0 = Vector::from([0.3, -0.7, 1.1]);
        let mut a = AdamState::new(x0.clone());
        let mut b = AdamState::new(x0);
        let p = AdamParams { lr: 0.01, ..Default::default() };
        for _ in 0..200 {
            let ga = grad(&a.x, 1.0);
            let gb = grad(&b.x, 10.0);
            a.step(&ga, p).unwrap();
            b.step(&gb, p).unwrap();
        }
        assert!(a.x.max_abs_diff(&b.x) < 1e-5, "{:?} {:?}", a.x, b.x);
    }
}
