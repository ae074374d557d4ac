use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::Problem;
use crate::error::{Error, Result};
use crate::math::{powf, sqrt};
use crate::rng::{gaussian_vector, RngStream};
use crate::vector::Vector;

/// `f(x) = ½ (x − x*)ᵀ A (x − x*)` with diagonal `A`.
///
/// The eigenvalues are log-spaced on `[1, condition_number]`, so `L` equals
/// the condition number. The stochastic oracle adds `Normal(0, σ²/n)` per
/// coordinate, i.e. noise with total variance `σ²`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    diag: Vec<f64>,
    x_star: Vector,
    x0: Vector,
    sigma: f64,
    seed: u64,
}

impl Quadratic {
    pub fn new(n: usize, condition_number: f64, sigma: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", 0.0, "must be >= 1"));
        }
        if !(condition_number >= 1.0) || !condition_number.is_finite() {
            return Err(Error::param("condition_number", condition_number, "must be >= 1"));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", sigma, "must be >= 0"));
        }
        let diag = (0..n)
            .map(|i| {
                if n == 1 {
                    1.0
                } else {
                    powf(condition_number, i as f64 / (n - 1) as f64)
                }
            })
            .collect();
        // The minimizer is drawn from a stream disjoint from any run stream.
        let mut rng = RngStream::derive(seed, u64::MAX);
        let x_star = gaussian_vector(&mut rng, n, 1.0)?;
        Ok(Quadratic {
            diag,
            x_star,
            x0: Vector::zeros(n),
            sigma,
            seed,
        })
    }

    /// Same objective with a caller-chosen minimizer.
    pub fn with_minimizer(mut self, x_star: Vector) -> Self {
        assert_eq!(x_star.len(), self.diag.len());
        self.x_star = x_star;
        self
    }

    pub fn with_initial_point(mut self, x0: Vector) -> Self {
        assert_eq!(x0.len(), self.diag.len());
        self.x0 = x0;
        self
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.diag
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Problem for Quadratic {
    fn describe(&self) -> String {
        format!(
            "quadratic(n={},cond={},sigma={},seed={})",
            self.diag.len(),
            self.diag.last().copied().unwrap_or(1.0),
            self.sigma,
            self.seed
        )
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn initial_point(&self) -> Vector {
        self.x0.clone()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * self
            .diag
            .iter()
            .zip(x.iter().zip(self.x_star.iter()))
            .map(|(a, (x, s))| a * (x - s) * (x - s))
            .sum::<f64>()
    }

    fn full_grad(&self, x: &Vector) -> Vector {
        self.diag
            .iter()
            .zip(x.iter().zip(self.x_star.iter()))
            .map(|(a, (x, s))| a * (x - s))
            .collect()
    }

    fn stoch_grad(&self, x: &Vector, rng: &mut RngStream) -> Vector {
        let mut g = self.full_grad(x);
        if self.sigma > 0.0 {
            let per_coord = self.sigma / sqrt(self.dim() as f64);
            for gi in g.iter_mut() {
                *gi += per_coord * rng.normal();
            }
        }
        g
    }

    fn smoothness(&self) -> Option<f64> {
        self.diag.iter().copied().reduce(f64::max)
    }

    fn sigma_sq(&self) -> Option<f64> {
        Some(self.sigma * self.sigma)
    }

    fn x_star(&self) -> Option<Vector> {
        Some(self.x_star.clone())
    }

    fn f_star(&self) -> Option<f64> {
        Some(0.0)
    }

    fn is_deterministic(&self) -> bool {
        self.sigma == 0.0
    }

    fn grad_second_moment(&self, x: &Vector) -> Option<f64> {
        Some(self.full_grad(x).norm_sq() + self.sigma * self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::fd_gradient;

    #[test]
    fn one_dimensional_unit() {
        let q = Quadratic::new(1, 1.0, 0.0, 3).unwrap();
        let s = q.x_star().unwrap()[0];
        let x = Vector::from([s + 2.0]);
        assert_eq!(q.value(&x), 2.0);
        assert_eq!(q.smoothness(), Some(1.0));
    }

    #[test]
    fn minimizer_is_stationary() {
        let q = Quadratic::new(10, 10.0, 1.0, 0).unwrap();
        let xs = q.x_star().unwrap();
        assert_eq!(q.full_grad(&xs), Vector::zeros(10));
        assert_eq!(q.value(&xs), 0.0);
        assert_eq!(q.smoothness(), Some(10.0));
    }

    #[test]
    fn eigenvalues_log_spaced() {
        let q = Quadratic::new(3, 100.0, 0.0, 0).unwrap();
        let e = q.eigenvalues();
        assert!((e[0] - 1.0).abs() < 1e-15);
        assert!((e[1] - 10.0).abs() < 1e-12);
        assert!((e[2] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn smoothness_residual_nonpositive() {
        let q = Quadratic::new(8, 25.0, 0.0, 9).unwrap();
        let l = q.smoothness().unwrap();
        let mut rng = RngStream::new(1);
        for _ in 0..1000 {
            let x = gaussian_vector(&mut rng, 8, 3.0).unwrap();
            let y = gaussian_vector(&mut rng, 8, 3.0).unwrap();
            let g = q.full_grad(&y);
            let lin = q.value(&x) - q.value(&y) - crate::vector::dot(&g, &(x.iter().zip(y.iter()).map(|(a, b)| a - b).collect::<Vector>())).unwrap();
            let resid = lin.abs() - 0.5 * l * x.dist_sq(&y);
            assert!(resid <= 1e-9 * (1.0 + lin.abs()), "{resid}");
        }
    }

    #[test]
    fn fd_matches_to_1e8() {
        let q = Quadratic::new(10, 10.0, 0.0, 4).unwrap();
        let mut rng = RngStream::new(2);
        for _ in 0..20 {
            let x = gaussian_vector(&mut rng, 10, 1.0).unwrap();
            let fd = fd_gradient(&q, &x, 1e-6);
            assert!(fd.max_abs_diff(&q.full_grad(&x)) <= 1e-8);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Quadratic::new(0, 1.0, 0.0, 0).is_err());
        assert!(Quadratic::new(2, 0.5, 0.0, 0).is_err());
        assert!(Quadratic::new(2, 2.0, -1.0, 0).is_err());
    }
}
