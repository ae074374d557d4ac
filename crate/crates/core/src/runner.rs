//! Drives one optimizer over one problem for `T` steps.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::optimizers::{
    AdamParams, AdamState, DaState, MdaState, RegSgdState, SgdmState, SpaState,
};
use crate::problems::Problem;
use crate::rng::RngStream;
use crate::schedules::{self, ScheduleSpec};
use crate::trace::{Abort, RunTrace, TraceRow};
use crate::vector::Vector;

/// How the dual averaging scaling sequence `β_k` is generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaRule {
    /// `β_k = √(k+1)` with `λ_k = η_k √(k+1)`.
    Sqrt,
    /// `β_{k+1} = β_k + 1/β_k` from `β_0`, with `λ_k = η_k`.
    Nesterov { beta0: f64 },
}

/// An optimizer together with its method-specific hyperparameters. The
/// step size `η_k` and momentum parameter `c_k` come from the
/// [`ScheduleSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Sgd,
    /// Heavy ball with learning rate `η_k` and buffer decay `momentum`.
    Sgdm { momentum: f64 },
    /// Primal averaging with `(η_k, c_k)`.
    Spa,
    /// SGD with the decaying `‖x − x_0‖²` penalty that reproduces `Da` with
    /// [`BetaRule::Sqrt`].
    RegSgd,
    /// Dual averaging. With `averaging`, the gradient is taken at a running
    /// average of the dual iterates with weight `c_k`.
    Da { beta_rule: BetaRule, averaging: bool },
    /// Modernized dual averaging.
    Mda,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Method {
    pub fn id(&self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Sgdm { .. } => "sgdm",
            Method::Spa => "spa",
            Method::RegSgd => "reg_sgd",
            Method::Da { .. } => "da",
            Method::Mda => "mda",
            Method::Adam { .. } => "adam",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Method::Sgdm { momentum } => format!("sgdm(momentum={momentum})"),
            Method::Da {
                beta_rule,
                averaging,
            } => {
                let rule = match beta_rule {
                    BetaRule::Sqrt => String::from("sqrt"),
                    BetaRule::Nesterov { beta0 } => format!("nesterov(beta0={beta0})"),
                };
                format!("da(beta_rule={rule},averaging={averaging})")
            }
            Method::Adam { beta1, beta2, eps } => {
                format!("adam(beta1={beta1},beta2={beta2},eps={eps})")
            }
            other => String::from(other.id()),
        }
    }

    pub fn adam_default() -> Self {
        let p = AdamParams::default();
        Method::Adam {
            beta1: p.beta1,
            beta2: p.beta2,
            eps: p.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReturnMode {
    #[default]
    LastIterate,
    /// `(1/(T+1)) Σ_{k=0}^{T} x_k`.
    AverageIterate,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub return_mode: ReturnMode,
    /// Overrides the problem's initial point.
    pub x0: Option<Vector>,
    /// Stream index under the run seed; distinct runs sharing a seed should
    /// use distinct indices.
    pub run_index: u64,
    /// Coupled weight decay: the optimizer sees `g + wd·x`.
    pub weight_decay: f64,
    /// Skip the per-step rows; only the final iterate and loss are kept.
    pub skip_trace: bool,
}

enum State {
    Sgd(Vector),
    Sgdm(SgdmState, f64),
    Spa(SpaState),
    RegSgd(RegSgdState),
    Da {
        st: DaState,
        rule: BetaRule,
        beta: f64,
        prev_beta: f64,
    },
    AvgDa {
        st: MdaState,
        rule: BetaRule,
        beta: f64,
        prev_beta: f64,
    },
    Mda(MdaState),
    Adam(AdamState, AdamParams),
}

/// Values of the schedule used at one step, as recorded in the trace.
#[derive(Debug, Clone, Copy)]
struct StepInfo {
    effective_lr: f64,
    alpha: f64,
    beta: f64,
    lambda: f64,
    c: f64,
}

impl State {
    fn new(method: &Method, x0: Vector) -> Self {
        match *method {
            Method::Sgd => State::Sgd(x0),
            Method::Sgdm { momentum } => State::Sgdm(SgdmState::new(x0), momentum),
            Method::Spa => State::Spa(SpaState::new(x0)),
            Method::RegSgd => State::RegSgd(RegSgdState::new(x0)),
            Method::Da {
                beta_rule,
                averaging,
            } => {
                let b0 = match beta_rule {
                    BetaRule::Sqrt => 1.0,
                    BetaRule::Nesterov { beta0 } => beta0,
                };
                if averaging {
                    State::AvgDa {
                        st: MdaState::new(x0),
                        rule: beta_rule,
                        beta: b0,
                        prev_beta: b0,
                    }
                } else {
                    State::Da {
                        st: DaState::new(x0),
                        rule: beta_rule,
                        beta: b0,
                        prev_beta: b0,
                    }
                }
            }
            Method::Mda => State::Mda(MdaState::new(x0)),
            Method::Adam { beta1, beta2, eps } => State::Adam(
                AdamState::new(x0),
                AdamParams {
                    lr: 1.0,
                    beta1,
                    beta2,
                    eps,
                },
            ),
        }
    }

    fn x(&self) -> &Vector {
        match self {
            State::Sgd(x) => x,
            State::Sgdm(s, _) => &s.x,
            State::Spa(s) => &s.x,
            State::RegSgd(s) => &s.x,
            State::Da { st, .. } => &st.x,
            State::AvgDa { st, .. } => &st.x,
            State::Mda(s) => &s.x,
            State::Adam(s, _) => &s.x,
        }
    }

    /// Schedule values for step `k` (without stepping).
    fn info(&self, k: usize, eta: f64, c: f64) -> StepInfo {
        let plain = StepInfo {
            effective_lr: eta,
            alpha: 0.0,
            beta: 1.0,
            lambda: eta,
            c: 1.0,
        };
        match self {
            State::Sgd(_) | State::Adam(..) => plain,
            State::Sgdm(_, m) => StepInfo { c: 1.0 - m, ..plain },
            State::Spa(_) => StepInfo { c, ..plain },
            State::RegSgd(_) | State::Mda(_) => {
                let beta = schedules::beta(k);
                let lambda = schedules::lambda(k, eta);
                let prev = if k == 0 { beta } else { schedules::beta(k - 1) };
                StepInfo {
                    effective_lr: schedules::effective_lr(lambda, beta),
                    alpha: (beta - prev) / lambda,
                    beta,
                    lambda,
                    c: if matches!(self, State::Mda(_)) { c } else { 1.0 },
                }
            }
            State::Da {
                rule,
                beta,
                prev_beta,
                ..
            }
            | State::AvgDa {
                rule,
                beta,
                prev_beta,
                ..
            } => {
                let (beta, lambda) = match rule {
                    BetaRule::Sqrt => (schedules::beta(k), schedules::lambda(k, eta)),
                    BetaRule::Nesterov { .. } => (*beta, eta),
                };
                let prev = match rule {
                    BetaRule::Sqrt if k > 0 => schedules::beta(k - 1),
                    BetaRule::Sqrt => beta,
                    BetaRule::Nesterov { .. } => *prev_beta,
                };
                StepInfo {
                    effective_lr: schedules::effective_lr(lambda, beta),
                    alpha: (beta - prev) / lambda,
                    beta,
                    lambda,
                    c: if matches!(self, State::AvgDa { .. }) { c } else { 1.0 },
                }
            }
        }
    }

    fn step(&mut self, g: &Vector, k: usize, eta: f64, info: StepInfo) -> Result<()> {
        match self {
            State::Sgd(x) => {
                let next = crate::optimizers::sgd_step(x, g, eta).map_err(|e| at_step(e, k))?;
                *x = next;
                Ok(())
            }
            State::Sgdm(s, m) => s.step(g, eta, *m),
            State::Spa(s) => s.step(g, eta, info.c),
            State::RegSgd(s) => s.step(g, info.effective_lr, info.alpha),
            State::Mda(s) => s.step(g, eta, info.c),
            State::Da {
                st,
                rule,
                beta,
                prev_beta,
            } => {
                st.step(g, info.lambda, info.beta)?;
                advance_beta(*rule, beta, prev_beta);
                Ok(())
            }
            State::AvgDa {
                st,
                rule,
                beta,
                prev_beta,
            } => {
                st.step_with(g, info.lambda, info.beta, info.c)?;
                advance_beta(*rule, beta, prev_beta);
                Ok(())
            }
            State::Adam(s, p) => s.step(g, AdamParams { lr: eta, ..*p }),
        }
    }
}

fn advance_beta(rule: BetaRule, beta: &mut f64, prev: &mut f64) {
    if let BetaRule::Nesterov { .. } = rule {
        *prev = *beta;
        *beta += 1.0 / *beta;
    }
}

fn at_step(e: Error, k: usize) -> Error {
    match e {
        Error::NonFinite { what, .. } => Error::NonFinite { what, step: k },
        other => other,
    }
}

/// Runs `T` steps and records one [`TraceRow`] per step `k = 0..T`.
///
/// Configuration problems (bad schedule, zero `T`, mismatched `x0`) are
/// errors. Numerical blow-up is not: the trace stops at the offending step
/// and carries an [`Abort`].
pub fn run(
    problem: &dyn Problem,
    method: &Method,
    schedule: &ScheduleSpec,
    total_steps: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace> {
    if total_steps == 0 {
        return Err(Error::param("T", 0.0, "must be >= 1"));
    }
    schedule.validate()?;
    validate_method(method)?;
    if !(opts.weight_decay >= 0.0) || !opts.weight_decay.is_finite() {
        return Err(Error::param("weight_decay", opts.weight_decay, "must be finite and >= 0"));
    }
    let x0 = opts.x0.clone().unwrap_or_else(|| problem.initial_point());
    if x0.len() != problem.dim() {
        return Err(Error::LengthMismatch {
            expected: problem.dim(),
            found: x0.len(),
        });
    }
    let mut rng = RngStream::derive(seed, opts.run_index);
    let mut state = State::new(method, x0.clone());
    let mut rows = Vec::with_capacity(total_steps);
    let mut sum = Vector::zeros(x0.len());
    let mut abort = None;
    let mut last_good = x0.clone();

    for k in 0..total_steps {
        let x = state.x().clone();
        let eta = schedule.lr(k);
        let c = schedule.momentum(k);
        let info = state.info(k, eta, c);
        if !opts.skip_trace {
            let loss = problem.value(&x);
            let grad_norm_sq = problem.full_grad(&x).norm_sq();
            if !loss.is_finite() || !grad_norm_sq.is_finite() {
                abort = Some(Abort {
                    step: k,
                    reason: "non-finite loss or gradient",
                });
                break;
            }
            rows.push(TraceRow {
                step: k,
                loss,
                grad_norm_sq,
                effective_lr: info.effective_lr,
                alpha: info.alpha,
                beta: info.beta,
                lambda: info.lambda,
                c: info.c,
                dist_x0_sq: x.dist_sq(&x0),
            });
        }
        sum.axpy_in_place(1.0, &x);
        last_good = x;
        let mut g = problem.stoch_grad(&last_good, &mut rng);
        if opts.weight_decay != 0.0 {
            g.axpy_in_place(opts.weight_decay, &last_good);
        }
        match state.step(&g, k, eta, info) {
            Ok(()) => {}
            Err(Error::NonFinite { what, .. }) => {
                abort = Some(Abort { step: k, reason: what });
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let final_x = if abort.is_some() {
        last_good
    } else {
        let x_t = state.x().clone();
        match opts.return_mode {
            ReturnMode::LastIterate => x_t,
            ReturnMode::AverageIterate => {
                sum.axpy_in_place(1.0, &x_t);
                sum.scale_in_place(1.0 / (total_steps + 1) as f64);
                sum
            }
        }
    };
    let final_loss = problem.value(&final_x);
    let final_grad_norm_sq = problem.full_grad(&final_x).norm_sq();
    Ok(RunTrace {
        rows,
        final_x,
        final_loss,
        final_grad_norm_sq,
        abort,
    })
}

fn validate_method(method: &Method) -> Result<()> {
    match *method {
        Method::Sgdm { momentum } if !(0.0..1.0).contains(&momentum) => {
            Err(Error::param("momentum", momentum, "must lie in [0, 1)"))
        }
        Method::Da {
            beta_rule: BetaRule::Nesterov { beta0 },
            ..
        } if !(beta0 > 0.0) => Err(Error::param("beta0", beta0, "must be > 0")),
        Method::Adam { beta1, beta2, eps } => {
            if !(0.0..1.0).contains(&beta1) {
                Err(Error::param("beta1", beta1, "must lie in [0, 1)"))
            } else if !(0.0..1.0).contains(&beta2) {
                Err(Error::param("beta2", beta2, "must lie in [0, 1)"))
            } else if !(eps > 0.0) {
                Err(Error::param("eps", eps, "must be > 0"))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

/// Iterates of a primal averaging run, `x_0..=x_N` and `z_0..=z_N`.
#[derive(Debug, Clone)]
pub struct SpaPath {
    pub xs: Vec<Vector>,
    pub zs: Vec<Vector>,
}

/// Records `steps` primal averaging steps with exact gradients.
pub fn spa_path(
    problem: &dyn Problem,
    x0: Vector,
    eta: f64,
    c: f64,
    steps: usize,
) -> Result<SpaPath> {
    let mut st = SpaState::new(x0.clone());
    let mut xs = Vec::with_capacity(steps + 1);
    let mut zs = Vec::with_capacity(steps + 1);
    xs.push(x0.clone());
    zs.push(x0);
    for _ in 0..steps {
        let g = problem.full_grad(&st.x);
        st.step(&g, eta, c)?;
        xs.push(st.x.clone());
        zs.push(st.z.clone());
    }
    Ok(SpaPath { xs, zs })
}

/// Per-seed summary of an MDA run with flat `η` and constant `c`, holding
/// every trajectory quantity that the MDA rate bound refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdaPathSummary {
    /// `(1/2T) Σ_{k=0}^{T} (‖∇f(x_k)‖² + ‖∇f(z_k)‖²)`.
    pub lhs: f64,
    /// `(1/(T+1)) Σ_{k=0}^{T} ½(‖∇f(x_k)‖² + ‖∇f(z_k)‖²)`.
    pub mean_half_grad_sq: f64,
    /// `max_k E‖∇f(x_k, ξ)‖²` over the visited `x_k`.
    pub sigma_sq_hat: f64,
    /// `max_k max(‖x_k − x_0‖², ‖z_k − x_0‖²)`.
    pub r_sq_hat: f64,
    pub f_x0: f64,
    pub f_z_next: f64,
    pub f_x_t: f64,
    pub min_f: f64,
}

/// Runs `T + 1` MDA steps (`k = 0..=T`) so that `z_{T+1}` exists.
///
/// `moment_samples` draws are used to estimate `E‖∇f(x, ξ)‖²` when the
/// problem has no closed form; they come from a separate stream so the
/// trajectory itself does not depend on it.
pub fn mda_path_summary(
    problem: &dyn Problem,
    total_steps: usize,
    eta: f64,
    c: f64,
    seed: u64,
    moment_samples: usize,
) -> Result<MdaPathSummary> {
    if total_steps == 0 {
        return Err(Error::param("T", 0.0, "must be >= 1"));
    }
    let x0 = problem.initial_point();
    let mut st = MdaState::new(x0.clone());
    let mut rng = RngStream::derive(seed, 0);
    let mut probe = RngStream::derive(seed, 1);
    let mut grad_sum = 0.0;
    let mut sigma_sq_hat: f64 = 0.0;
    let mut r_sq_hat: f64 = 0.0;
    let f_x0 = problem.value(&x0);
    let mut min_f = f_x0;
    let mut f_x_t = f_x0;
    for k in 0..=total_steps {
        let gx = problem.full_grad(&st.x);
        let gz = problem.full_grad(&st.z);
        grad_sum += gx.norm_sq() + gz.norm_sq();
        let moment = match problem.grad_second_moment(&st.x) {
            Some(m) => m,
            None => sampled_second_moment(problem, &st.x, &mut probe, moment_samples.max(1)),
        };
        sigma_sq_hat = sigma_sq_hat.max(moment);
        r_sq_hat = r_sq_hat.max(st.x.dist_sq(&x0)).max(st.z.dist_sq(&x0));
        if k == total_steps {
            f_x_t = problem.value(&st.x);
        }
        let g = problem.stoch_grad(&st.x, &mut rng);
        st.step(&g, eta, c)?;
        min_f = min_f.min(problem.value(&st.x));
    }
    r_sq_hat = r_sq_hat.max(st.z.dist_sq(&x0));
    let t = total_steps as f64;
    Ok(MdaPathSummary {
        lhs: grad_sum / (2.0 * t),
        mean_half_grad_sq: 0.5 * grad_sum / (t + 1.0),
        sigma_sq_hat,
        r_sq_hat,
        f_x0,
        f_z_next: problem.value(&st.z),
        f_x_t,
        min_f: min_f.min(f_x_t),
    })
}

/// Monte Carlo estimate of `E‖∇f(x, ξ)‖²`.
pub fn sampled_second_moment(
    problem: &dyn Problem,
    x: &Vector,
    rng: &mut RngStream,
    samples: usize,
) -> f64 {
    let total: f64 = (0..samples)
        .map(|_| problem.stoch_grad(x, rng).norm_sq())
        .sum();
    total / samples as f64
}

/// `η = 1/√T`.
pub fn theorem_eta(total_steps: usize) -> f64 {
    1.0 / sqrt(total_steps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Quadratic;

    fn unit_quadratic_at(x0: f64) -> Quadratic {
        Quadratic::new(1, 1.0, 0.0, 0)
            .unwrap()
            .with_minimizer(Vector::from([0.0]))
            .with_initial_point(Vector::from([x0]))
    }

    #[test]
    fn single_sgd_step() {
        let q = unit_quadratic_at(1.0);
        let tr = run(&q, &Method::Sgd, &ScheduleSpec::flat(0.5, 1.0, 1), 1, 0, &RunOptions::default())
            .unwrap();
        assert_eq!(tr.rows.len(), 1);
        assert_eq!(tr.final_x, Vector::from([0.5]));
    }

    #[test]
    fn stationary_start_stays_put() {
        let q = Quadratic::new(3, 4.0, 0.0, 1).unwrap();
        let xs = q.x_star().unwrap();
        let methods = [
            Method::Sgd,
            Method::Sgdm { momentum: 0.9 },
            Method::Spa,
            Method::RegSgd,
            Method::Da { beta_rule: BetaRule::Sqrt, averaging: false },
            Method::Da { beta_rule: BetaRule::Nesterov { beta0: 1.0 }, averaging: true },
            Method::Mda,
            Method::adam_default(),
        ];
        let opts = RunOptions { x0: Some(xs.clone()), ..Default::default() };
        for m in &methods {
            let tr = run(&q, m, &ScheduleSpec::flat(0.1, 0.5, 20), 20, 3, &opts).unwrap();
            assert_eq!(tr.final_x, xs, "{}", m.id());
            assert!(tr.rows.iter().all(|r| r.grad_norm_sq == 0.0));
        }
    }

    #[test]
    fn average_iterate_mode() {
        let q = unit_quadratic_at(1.0);
        let opts = RunOptions { return_mode: ReturnMode::AverageIterate, ..Default::default() };
        let tr = run(&q, &Method::Sgd, &ScheduleSpec::flat(0.5, 1.0, 2), 2, 0, &opts).unwrap();
        // x = 1, 0.5, 0.25
        assert!((tr.final_x[0] - 1.75 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn divergence_aborts() {
        let q = Quadratic::new(2, 10.0, 0.0, 0).unwrap();
        let tr = run(&q, &Method::Sgd, &ScheduleSpec::flat(100.0, 1.0, 2000), 2000, 0, &RunOptions::default())
            .unwrap();
        let ab = tr.abort.clone().expect("should abort");
        assert_eq!(tr.rows.len(), ab.step.max(tr.rows.len()));
        assert!(tr.rows.len() < 2000);
        assert!(tr.final_x.is_finite());
    }

    #[test]
    fn nesterov_rule_records_betas() {
        let q = unit_quadratic_at(1.0);
        let m = Method::Da { beta_rule: BetaRule::Nesterov { beta0: 1.0 }, averaging: false };
        let tr = run(&q, &m, &ScheduleSpec::flat(1.0, 1.0, 3), 3, 0, &RunOptions::default()).unwrap();
        let betas: Vec<f64> = tr.rows.iter().map(|r| r.beta).collect();
        assert_eq!(betas, alloc::vec![1.0, 2.0, 2.5]);
        assert!(tr.rows.iter().all(|r| r.lambda == 1.0));
    }
}
