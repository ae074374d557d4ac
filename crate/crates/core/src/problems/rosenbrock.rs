use alloc::format;
use alloc::string::String;

use super::Problem;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::Vector;

/// Chained Rosenbrock, `Σᵢ 100 (x_{i+1} − xᵢ²)² + (1 − xᵢ)²`.
///
/// Deterministic. The reported `L` is a Gershgorin bound on the Hessian
/// over the box `[−2, 2]ⁿ`: diagonal at most `1200·4 + 400·2 + 202`, plus
/// two off-diagonal entries of magnitude at most `400·2`.
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    n: usize,
}

/// Gershgorin bound of the Hessian over `[−2, 2]ⁿ`.
pub const BOX_SMOOTHNESS: f64 = 1200.0 * 4.0 + 800.0 + 202.0 + 2.0 * 800.0;

impl Rosenbrock {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", n as f64, "must be >= 2"));
        }
        Ok(Rosenbrock { n })
    }
}

impl Problem for Rosenbrock {
    fn describe(&self) -> String {
        format!("rosenbrock(n={})", self.n)
    }

    fn dim(&self) -> usize {
        self.n
    }

    /// The classic `(−1.2, 1, −1.2, 1, …)` start.
    fn initial_point(&self) -> Vector {
        (0..self.n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect()
    }

    fn value(&self, x: &Vector) -> f64 {
        x.windows(2)
            .map(|w| {
                let a = w[1] - w[0] * w[0];
                let b = 1.0 - w[0];
                100.0 * a * a + b * b
            })
            .sum()
    }

    fn full_grad(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(self.n);
        for i in 0..self.n - 1 {
            let a = x[i + 1] - x[i] * x[i];
            g[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
            g[i + 1] += 200.0 * a;
        }
        g
    }

    fn stoch_grad(&self, x: &Vector, _rng: &mut RngStream) -> Vector {
        self.full_grad(x)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(BOX_SMOOTHNESS)
    }

    fn sigma_sq(&self) -> Option<f64> {
        Some(0.0)
    }

    fn x_star(&self) -> Option<Vector> {
        Some(Vector::filled(self.n, 1.0))
    }

    fn f_star(&self) -> Option<f64> {
        Some(0.0)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
