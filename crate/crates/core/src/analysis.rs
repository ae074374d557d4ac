//! Lyapunov functions, the per-step descent audit for primal averaging,
//! the step-size condition, convergence-rate bounds and rate fitting.
//!
//! All function values passed in here are gaps `f(·) − f*`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{ln, sqrt};
use crate::problems::Problem;
use crate::runner::SpaPath;

/// `η ≤ (c + ½)/L`, the step-size condition that keeps the
/// `‖x_k − x_{k−1}‖²` bracket of the MDA descent inequality nonpositive.
pub fn max_stepsize(l: f64, c: f64) -> f64 {
    (c + 0.5) / l
}

/// Which definition of the Lyapunov function to use.
///
/// The per-step inequality for primal averaging names the potential
/// `Γ_k = f(z_{k+1})/η² + (L/η)(1/c − 1) f(x_k) + L/(2η c²)‖x_{k+1} − x_k‖²`.
/// The MDA convergence argument uses the same three terms but calls that
/// quantity `Γ_{k+1}` and scales the last term by `1/η²` instead of `1/η`.
/// Only the second reading makes the inequality hold along actual
/// trajectories; the first is kept so its violations can be inspected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaConvention {
    /// `Γ_k` built from `(z_{k+1}, x_k, x_{k+1} − x_k)` with `L/(2η c²)`.
    #[default]
    AsPrinted,
    /// `Γ_k` built from `(z_k, x_{k−1}, x_k − x_{k−1})` with `L/(2η² c²)`.
    Shifted,
}

/// `Γ = (1/η²) f_z + (L/η)(1/c − 1) f_x + (L/(2η c_next²)) ‖Δx‖²`.
pub fn lyapunov_gamma(
    f_z_next: f64,
    f_x: f64,
    dx_norm_sq: f64,
    eta: f64,
    c: f64,
    c_next: f64,
    l: f64,
) -> f64 {
    let terms = gamma_terms(f_z_next, f_x, dx_norm_sq, eta, c, c_next, l);
    terms[0] + terms[1] + terms[2]
}

/// The three additive terms of [`lyapunov_gamma`].
pub fn gamma_terms(
    f_z_next: f64,
    f_x: f64,
    dx_norm_sq: f64,
    eta: f64,
    c: f64,
    c_next: f64,
    l: f64,
) -> [f64; 3] {
    [
        f_z_next / (eta * eta),
        (l / eta) * (1.0 / c - 1.0) * f_x,
        l / (2.0 * eta * c_next * c_next) * dx_norm_sq,
    ]
}

fn gamma_with(
    convention: GammaConvention,
    f_z: f64,
    f_x: f64,
    dx: f64,
    eta: f64,
    c: f64,
    l: f64,
) -> f64 {
    match convention {
        GammaConvention::AsPrinted => lyapunov_gamma(f_z, f_x, dx, eta, c, c, l),
        GammaConvention::Shifted => {
            f_z / (eta * eta) + (l / eta) * (1.0 / c - 1.0) * f_x + l / (2.0 * eta * eta * c * c) * dx
        }
    }
}

/// Coefficient multiplying `‖x_k − x_{k−1}‖²` in the primal averaging
/// inequality with constant `(η, c)`:
/// `½[(1/η²)(1/c − 1 + ηL)(1/c − 1) + (L/η)(1/c − 1)² − 1/(η²c²)]·L`.
pub fn spa_bracket(eta: f64, c: f64, l: f64) -> f64 {
    let a = 1.0 / c - 1.0;
    0.5 * ((a + eta * l) * a / (eta * eta) + l / eta * a * a - 1.0 / (eta * eta * c * c)) * l
}

/// The `‖x_k − x_{k−1}‖²` coefficient of the MDA per-step inequality at
/// step `k`, where the regularization weight has been bounded by
/// `1/(2η(k+1))`:
/// `(L/2 + 1/(4η(k+1)))·[(1/η²)(a + ηL_k)a + (1/η)L_k a² − 1/(η²c²)]`
/// with `a = 1/c − 1` and `L_k = L + 1/(2η(k+1))`.
pub fn mda_bracket(k: usize, eta: f64, c: f64, l: f64) -> f64 {
    let a = 1.0 / c - 1.0;
    let kp1 = (k + 1) as f64;
    let lk = l + 1.0 / (2.0 * eta * kp1);
    let outer = l / 2.0 + 1.0 / (4.0 * eta * kp1);
    outer * ((a + eta * lk) * a / (eta * eta) + lk / eta * a * a - 1.0 / (eta * eta * c * c))
}

/// Scale used to decide whether [`mda_bracket`] is positive beyond rounding.
fn mda_bracket_scale(k: usize, eta: f64, c: f64, l: f64) -> f64 {
    let kp1 = (k + 1) as f64;
    (l / 2.0 + 1.0 / (4.0 * eta * kp1)) / (eta * eta * c * c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovRecord {
    pub k: usize,
    /// `Γ_k`.
    pub gamma: f64,
    pub inequality_lhs: f64,
    pub inequality_rhs: f64,
    /// `rhs − lhs`, unclipped.
    pub residual: f64,
    /// [`mda_bracket`] at this step.
    pub mda_bracket: f64,
}

impl LyapunovRecord {
    /// True when the residual falls below `−tol·max(1, |Γ_k|)`.
    pub fn violates(&self, tol: f64) -> bool {
        self.residual < -tol * self.gamma.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentAudit {
    pub records: Vec<LyapunovRecord>,
    /// Steps whose residual is below tolerance.
    pub violations: Vec<usize>,
    /// Constant bracket coefficient of the primal averaging inequality.
    pub spa_bracket: f64,
    /// First step at which [`mda_bracket`] is positive beyond rounding.
    pub first_positive_bracket: Option<usize>,
    /// First step at which [`mda_bracket`] is nonpositive.
    pub first_nonpositive_bracket: Option<usize>,
}

impl DescentAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// The bracket coefficient is positive at some step, which is the
    /// signature of a step size beyond the admissible range.
    pub fn bracket_sign_flip(&self) -> bool {
        self.first_positive_bracket.is_some()
    }

    pub fn worst_relative_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.residual / r.gamma.abs().max(1.0))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates, at every step of a deterministic primal averaging run with
/// constant `(η, c)`,
///
/// `(1/2η)(‖∇f(x_k)‖² + ‖∇f(z_k)‖²) ≤ Γ_k − Γ_{k+1} + L‖∇f(x_k)‖² + B‖x_k − x_{k−1}‖²`
///
/// with `B` from [`spa_bracket`] and `x_{−1} = x_0`. Function values enter
/// as gaps to `f*` (the problem's, or else the best value on the path).
pub fn check_descent_inequality(
    problem: &dyn Problem,
    path: &SpaPath,
    eta: f64,
    c: f64,
    l: f64,
    convention: GammaConvention,
    tol: f64,
) -> Result<DescentAudit> {
    if !problem.is_deterministic() {
        return Err(Error::Usage(
            "descent audit needs exact gradients; the problem is stochastic".into(),
        ));
    }
    if !(eta > 0.0) || !(c > 0.0 && c <= 1.0) || !(l > 0.0) {
        return Err(Error::Usage(format!(
            "descent audit needs eta > 0, c in (0, 1], L > 0 (got {eta}, {c}, {l})"
        )));
    }
    let n = path.xs.len();
    if n < 3 || path.zs.len() != n {
        return Err(Error::Usage("descent audit needs at least two steps".into()));
    }
    let f: Vec<f64> = path.xs.iter().map(|x| problem.value(x)).collect();
    let fz: Vec<f64> = path.zs.iter().map(|z| problem.value(z)).collect();
    let f_star = problem.f_star().unwrap_or_else(|| {
        f.iter().chain(fz.iter()).copied().fold(f64::INFINITY, f64::min)
    });
    let gx: Vec<f64> = path.xs.iter().map(|x| problem.full_grad(x).norm_sq()).collect();
    let gz: Vec<f64> = path.zs.iter().map(|z| problem.full_grad(z).norm_sq()).collect();
    let x = |j: isize| &path.xs[j.max(0) as usize];

    // Γ at "index" k, according to the convention.
    let gamma = |k: usize| -> f64 {
        let (zi, xi) = match convention {
            GammaConvention::AsPrinted => (k + 1, k as isize),
            GammaConvention::Shifted => (k, k as isize - 1),
        };
        let dx = x(xi + 1).dist_sq(x(xi));
        let fx = f[xi.max(0) as usize] - f_star;
        gamma_with(convention, fz[zi] - f_star, fx, dx, eta, c, l)
    };
    let last = match convention {
        GammaConvention::AsPrinted => n - 3,
        GammaConvention::Shifted => n - 2,
    };
    let bracket = spa_bracket(eta, c, l);
    let mut records = Vec::with_capacity(last + 1);
    let mut violations = Vec::new();
    let mut first_positive = None;
    let mut first_nonpositive = None;
    for k in 0..=last {
        let g_k = gamma(k);
        let lhs = (gx[k] + gz[k]) / (2.0 * eta);
        let step_sq = x(k as isize).dist_sq(x(k as isize - 1));
        let rhs = g_k - gamma(k + 1) + l * gx[k] + bracket * step_sq;
        let mb = mda_bracket(k, eta, c, l);
        if mb > 1e-12 * mda_bracket_scale(k, eta, c, l) {
            first_positive.get_or_insert(k);
        } else {
            first_nonpositive.get_or_insert(k);
        }
        let rec = LyapunovRecord {
            k,
            gamma: g_k,
            inequality_lhs: lhs,
            inequality_rhs: rhs,
            residual: rhs - lhs,
            mda_bracket: mb,
        };
        if rec.violates(tol) {
            violations.push(k);
        }
        records.push(rec);
    }
    Ok(DescentAudit {
        records,
        violations,
        spa_bracket: bracket,
        first_positive_bracket: first_positive,
        first_nonpositive_bracket: first_nonpositive,
    })
}

/// Every symbol of the MDA rate bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremConstants {
    pub l: f64,
    pub sigma_sq: f64,
    pub r_sq: f64,
    pub c: f64,
    /// `1/√T`.
    pub eta: f64,
    pub t: usize,
    /// `f(x_0) − f*`.
    pub f_x0_gap: f64,
    /// `E[f(z_{T+1}) − f*]`.
    pub f_zt_gap: f64,
    /// `E[f(x_T) − f*]`.
    pub f_xt_gap: f64,
    /// `√T (1 − √(T+1)/√(T+2))`.
    pub alpha_t: f64,
}

impl TheoremConstants {
    pub fn new(
        l: f64,
        sigma_sq: f64,
        r_sq: f64,
        c: f64,
        t: usize,
        f_x0_gap: f64,
        f_zt_gap: f64,
        f_xt_gap: f64,
    ) -> Self {
        TheoremConstants {
            l,
            sigma_sq,
            r_sq,
            c,
            eta: 1.0 / sqrt(t as f64),
            t,
            f_x0_gap,
            f_zt_gap,
            f_xt_gap,
            alpha_t: alpha_t(t),
        }
    }

    /// Smallest horizon allowed by the bound's hypothesis, `⌈L²/c²⌉`.
    pub fn min_horizon(&self) -> usize {
        let need = (self.l * self.l) / (self.c * self.c);
        libm::ceil(need) as usize
    }
}

/// `α_T = √T (1 − √(T+1)/√(T+2))`.
pub fn alpha_t(t: usize) -> f64 {
    let tf = t as f64;
    // 1 − √(T+1)/√(T+2) = 1 / (√(T+2)(√(T+2) + √(T+1)))
    let a = sqrt(tf + 2.0);
    let b = sqrt(tf + 1.0);
    sqrt(tf) / (a * (a + b))
}

/// The three lines of the MDA bound, and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// `2(gap(x_0) − gap(z_{T+1}))/√T`.
    pub descent: f64,
    /// `2(1/c − 1)((L+1)gap(x_0) − (L+α_T)gap(x_T))/T`.
    pub momentum: f64,
    /// `2(L/√T + log(T+1)/T)σ²`.
    pub noise: f64,
    /// `2(L log T/T + 2 log T/√T)R²`.
    pub domain: f64,
    pub total: f64,
}

/// Right-hand side of the MDA convergence bound on
/// `(1/2T) Σ_{k=0}^{T} (‖∇f(x_k)‖² + ‖∇f(z_k)‖²)`.
pub fn mda_bound_rhs(k: &TheoremConstants) -> Result<BoundTerms> {
    if k.t == 0 {
        return Err(Error::Hypothesis("T must be >= 1".into()));
    }
    let t = k.t as f64;
    if t < (k.l * k.l) / (k.c * k.c) {
        return Err(Error::Hypothesis(format!(
            "T = {} is below L^2/c^2 = {}",
            k.t,
            (k.l * k.l) / (k.c * k.c)
        )));
    }
    let rt = sqrt(t);
    let descent = 2.0 * (k.f_x0_gap - k.f_zt_gap) / rt;
    let momentum =
        2.0 * (1.0 / k.c - 1.0) * ((k.l + 1.0) * k.f_x0_gap - (k.l + k.alpha_t) * k.f_xt_gap) / t;
    let noise = 2.0 * (k.l / rt + ln(t + 1.0) / t) * k.sigma_sq;
    let domain = 2.0 * (k.l * ln(t) / t + 2.0 * ln(t) / rt) * k.r_sq;
    Ok(BoundTerms {
        descent,
        momentum,
        noise,
        domain,
        total: descent + momentum + noise + domain,
    })
}

/// `(f(x_0) − f*)/√T + Lσ²/(2T)`, the SGD rate bound with `η = 1/√T`.
pub fn sgd_bound_rhs(f_x0_gap: f64, l: f64, sigma_sq: f64, t: usize) -> f64 {
    let t = t as f64;
    f_x0_gap / sqrt(t) + l * sigma_sq / (2.0 * t)
}

/// Least-squares slope of `ln(metric)` against `ln(T)`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Usage(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(t, m)) = points.iter().find(|(t, m)| !(*m > 0.0) || !(*t > 0.0)) {
        return Err(Error::Usage(format!(
            "rate fit needs positive horizons and metrics, got ({t}, {m})"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(t, _)| ln(*t)).collect();
    let ys: Vec<f64> = points.iter().map(|(_, m)| ln(*m)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Usage("rate fit needs at least two distinct horizons".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Logistic, Quadratic};
    use crate::runner::spa_path;
    use crate::schedules::{alpha_prop1, alpha_reg, beta, lambda};
    use crate::vector::Vector;
    use approx::assert_relative_eq;

    #[test]
    fn max_stepsize_values() {
        assert_eq!(max_stepsize(1.0, 0.5), 1.0);
        assert_eq!(max_stepsize(1.0, 1.0), 1.5);
        for c in [0.1, 0.5, 0.9] {
            assert_relative_eq!(max_stepsize(10.0, c), 0.1 * max_stepsize(1.0, c), max_relative = 1e-15);
        }
    }

    #[test]
    fn gamma_cases() {
        assert_eq!(lyapunov_gamma(0.0, 0.0, 0.0, 0.3, 0.5, 0.5, 2.0), 0.0);
        let (fz, dx, eta, l) = (0.7, 0.2, 0.4, 3.0);
        assert_relative_eq!(
            lyapunov_gamma(fz, 123.0, dx, eta, 1.0, 1.0, l),
            fz / (eta * eta) + l / (2.0 * eta) * dx,
            max_relative = 1e-15
        );
        let a = gamma_terms(0.9, 0.4, 0.3, 0.2, 0.5, 0.5, 2.0);
        let b = gamma_terms(0.9, 0.4, 0.3, 0.4, 0.5, 0.5, 2.0);
        assert_relative_eq!(b[0], a[0] / 4.0, max_relative = 1e-15);
        assert_relative_eq!(b[2], a[2] / 2.0, max_relative = 1e-15);
    }

    fn one_d(x0: f64) -> Quadratic {
        Quadratic::new(1, 1.0, 0.0, 0)
            .unwrap()
            .with_minimizer(Vector::from([0.0]))
            .with_initial_point(Vector::from([x0]))
    }

    #[test]
    fn descent_audit_one_d_quadratic() {
        let q = one_d(1.0);
        let path = spa_path(&q, Vector::from([1.0]), 0.1, 0.5, 100).unwrap();
        let audit =
            check_descent_inequality(&q, &path, 0.1, 0.5, 1.0, GammaConvention::Shifted, 1e-6).unwrap();
        assert!(audit.passed(), "worst {}", audit.worst_relative_residual());
        assert!(!audit.bracket_sign_flip());
    }

    #[test]
    fn descent_audit_at_minimizer() {
        let q = one_d(0.0);
        let path = spa_path(&q, Vector::from([0.0]), 0.1, 0.5, 10).unwrap();
        for conv in [GammaConvention::AsPrinted, GammaConvention::Shifted] {
            let audit = check_descent_inequality(&q, &path, 0.1, 0.5, 1.0, conv, 1e-6).unwrap();
            for r in &audit.records {
                assert_eq!(r.inequality_lhs, 0.0);
                assert!(r.residual >= 0.0);
            }
        }
    }

    #[test]
    fn descent_audit_as_printed_is_violated() {
        let q = one_d(1.0);
        let path = spa_path(&q, Vector::from([1.0]), 0.1, 0.5, 100).unwrap();
        let audit =
            check_descent_inequality(&q, &path, 0.1, 0.5, 1.0, GammaConvention::AsPrinted, 1e-6).unwrap();
        assert!(!audit.passed());
    }

    #[test]
    fn bracket_sign_flip_above_max_stepsize() {
        let q = one_d(1.0);
        let (l, c) = (1.0, 0.5);
        let eta = 1.5 * max_stepsize(l, c);
        let path = spa_path(&q, Vector::from([1.0]), eta, c, 50).unwrap();
        let audit = check_descent_inequality(&q, &path, eta, c, l, GammaConvention::Shifted, 1e-6).unwrap();
        assert!(audit.bracket_sign_flip());
        assert_eq!(audit.first_positive_bracket, Some(0));
        // at the boundary the bracket touches zero at k = 0 and is negative afterwards
        let eta = max_stepsize(l, c);
        let path = spa_path(&q, Vector::from([1.0]), eta, c, 50).unwrap();
        let audit = check_descent_inequality(&q, &path, eta, c, l, GammaConvention::Shifted, 1e-6).unwrap();
        assert!(!audit.bracket_sign_flip());
        assert!(audit.records[1..].iter().all(|r| r.mda_bracket < 0.0));
    }

    #[test]
    fn descent_audit_rejects_stochastic() {
        let q = Quadratic::new(2, 2.0, 1.0, 0).unwrap();
        let path = spa_path(&q, Vector::zeros(2), 0.1, 0.5, 5).unwrap();
        let err = check_descent_inequality(&q, &path, 0.1, 0.5, 2.0, GammaConvention::Shifted, 1e-6);
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn descent_audit_logistic_full_batch() {
        let p = Logistic::new(200, 5, 200, 7).unwrap();
        let l = p.smoothness().unwrap();
        let c = 0.5;
        let eta = max_stepsize(l, c);
        let path = spa_path(&p, p.initial_point(), eta, c, 200).unwrap();
        let audit = check_descent_inequality(&p, &path, eta, c, l, GammaConvention::Shifted, 1e-6).unwrap();
        assert!(audit.passed(), "worst {}", audit.worst_relative_residual());
    }

    #[test]
    fn alpha_t_consistency() {
        for t in [1usize, 10, 400, 10_000, 1_000_000] {
            let tf = t as f64;
            let direct = tf.sqrt() * (1.0 - (tf + 1.0).sqrt() / (tf + 2.0).sqrt());
            assert_relative_eq!(alpha_t(t), direct, max_relative = 1e-6);
            let eta = 1.0 / tf.sqrt();
            assert_relative_eq!(alpha_t(t), alpha_reg(t, eta), max_relative = 1e-12);
            let p1 = alpha_prop1(t + 1, beta, |j| lambda(j, eta));
            assert_relative_eq!(alpha_t(t), p1, max_relative = 1e-6);
        }
        let a = alpha_t(10_000);
        assert!((a - 0.005).abs() / 0.005 < 0.01, "{a}");
    }

    #[test]
    fn bound_vanishing_terms() {
        let k = TheoremConstants::new(1.0, 0.0, 0.0, 1.0, 100, 0.0, 0.0, 0.0);
        assert!(mda_bound_rhs(&k).unwrap().total <= 0.0);
    }

    #[test]
    fn bound_linear_in_sigma_sq() {
        let base = TheoremConstants::new(2.0, 1.5, 3.0, 0.5, 1000, 4.0, 0.1, 0.2);
        let doubled = TheoremConstants { sigma_sq: 3.0, ..base };
        let t = 1000f64;
        let diff = mda_bound_rhs(&doubled).unwrap().total - mda_bound_rhs(&base).unwrap().total;
        assert_relative_eq!(diff, 2.0 * (2.0 / t.sqrt() + (t + 1.0).ln() / t) * 1.5, max_relative = 1e-12);
    }

    #[test]
    fn bound_hypothesis_enforced() {
        let k = TheoremConstants::new(10.0, 1.0, 1.0, 0.5, 399, 1.0, 0.0, 0.0);
        assert_eq!(k.min_horizon(), 400);
        assert!(matches!(mda_bound_rhs(&k), Err(Error::Hypothesis(_))));
        let ok = TheoremConstants { t: 400, ..k };
        assert!(mda_bound_rhs(&ok).is_ok());
    }

    #[test]
    fn sgd_bound_values() {
        assert_relative_eq!(sgd_bound_rhs(1.0, 1.0, 0.0, 100), 0.1, max_relative = 1e-15);
        assert_relative_eq!(sgd_bound_rhs(3.0, 2.0, 0.0, 400), 0.5 * sgd_bound_rhs(3.0, 2.0, 0.0, 100), max_relative = 1e-15);
        assert_eq!(sgd_bound_rhs(0.0, 5.0, 0.0, 7), 0.0);
    }

    #[test]
    fn rate_fit_power_laws() {
        let s = rate_fit(&[(100.0, 0.1), (1e4, 0.01), (1e6, 0.001)]).unwrap();
        assert!((s + 0.5).abs() < 1e-12, "{s}");
        let s = rate_fit(&[(10.0, 3.0), (20.0, 3.0), (40.0, 3.0)]).unwrap();
        assert!(s.abs() < 1e-12);
        let s = rate_fit(&[(10.0, 0.7), (100.0, 0.07), (1000.0, 0.007)]).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        assert!(rate_fit(&[(10.0, 1.0), (100.0, 0.0), (1000.0, 0.1)]).is_err());
        assert!(rate_fit(&[(10.0, 1.0), (100.0, 0.5)]).is_err());
    }
}
