//! Desk-scale objectives with exact gradient oracles.

use alloc::string::String;

use crate::rng::RngStream;
use crate::vector::Vector;

mod logistic;
mod mlp;
mod quadratic;
mod rosenbrock;

pub use logistic::{Logistic, DEFAULT_L2 as LOGISTIC_DEFAULT_L2};
pub use mlp::TinyMlp;
pub use quadratic::Quadratic;
pub use rosenbrock::Rosenbrock;

/// A differentiable objective `f(x) = E_ξ f(x, ξ)`.
///
/// Oracles are read-only; a problem may be shared between concurrent runs,
/// each of which brings its own [`RngStream`].
pub trait Problem: Send + Sync {
    /// Identifier with parameters, e.g. `quadratic(n=10,cond=10,sigma=1,seed=0)`.
    fn describe(&self) -> String;

    fn dim(&self) -> usize;

    fn initial_point(&self) -> Vector;

    fn value(&self, x: &Vector) -> f64;

    fn full_grad(&self, x: &Vector) -> Vector;

    /// Unbiased stochastic gradient `∇f(x, ξ)`.
    fn stoch_grad(&self, x: &Vector, rng: &mut RngStream) -> Vector;

    /// Smoothness constant `L`, when one is known or bounded analytically.
    fn smoothness(&self) -> Option<f64>;

    /// Proxy for the gradient noise level, when one is known.
    fn sigma_sq(&self) -> Option<f64>;

    fn x_star(&self) -> Option<Vector> {
        None
    }

    /// `f*`, when known (exactly, or from a high-accuracy deterministic solve).
    fn f_star(&self) -> Option<f64>;

    /// True when `stoch_grad` always equals `full_grad`.
    fn is_deterministic(&self) -> bool;

    /// `E‖∇f(x, ξ)‖²` in closed form, when available.
    fn grad_second_moment(&self, _x: &Vector) -> Option<f64> {
        None
    }
}

/// Central differences `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h`.
pub fn fd_gradient<P: Problem + ?Sized>(problem: &P, x: &Vector, h: f64) -> Vector {
    fd_gradient_fn(|y| problem.value(y), x, h)
}

/// [`fd_gradient`] for a bare function.
pub fn fd_gradient_fn(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let xi = x[i];
            probe[i] = xi + h;
            let up = f(&probe);
            probe[i] = xi - h;
            let down = f(&probe);
            probe[i] = xi;
            (up - down) / (2.0 * h)
        })
        .collect()
}
