//! Per-step telemetry.

use alloc::vec::Vec;

use crate::vector::Vector;

/// One row per step `k`: the state `x_k` and the schedule values used to
/// move from `x_k` to `x_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// `f(x_k)`.
    pub loss: f64,
    /// `‖∇f(x_k)‖²` from the exact oracle.
    pub grad_norm_sq: f64,
    /// `λ_k/β_k`, or the plain learning rate for SGD-type methods.
    pub effective_lr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub c: f64,
    /// `‖x_k − x_0‖²`.
    pub dist_x0_sq: f64,
}

impl TraceRow {
    pub const HEADER: &'static str =
        "step,loss,grad_norm_sq,effective_lr,alpha,beta,lambda,c,dist_x0_sq";

    /// Values in header order, excluding `step`.
    pub fn values(&self) -> [f64; 8] {
        [
            self.loss,
            self.grad_norm_sq,
            self.effective_lr,
            self.alpha,
            self.beta,
            self.lambda,
            self.c,
            self.dist_x0_sq,
        ]
    }
}

/// Why and where a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub step: usize,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// Last iterate `x_T`, or the iterate average when that return mode is
    /// selected. On abort, the last finite iterate.
    pub final_x: Vector,
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    pub abort: Option<Abort>,
}

impl RunTrace {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    pub fn min_grad_norm_sq(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.grad_norm_sq)
            .chain(core::iter::once(self.final_grad_norm_sq))
            .fold(f64::INFINITY, f64::min)
    }

    /// `max_k ‖x_k − x_0‖²` over the recorded rows.
    pub fn max_dist_x0_sq(&self) -> f64 {
        self.rows.iter().map(|r| r.dist_x0_sq).fold(0.0, f64::max)
    }
}
