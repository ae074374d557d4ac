use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::Problem;
use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};
use crate::rng::RngStream;
use crate::vector::Vector;

/// Ridge term added so that `f*` is attained.
pub const DEFAULT_L2: f64 = 1e-3;

/// Probability that a synthetic label is flipped.
const LABEL_NOISE: f64 = 0.1;

/// Binary logistic regression on synthetic data,
/// `f(x) = (1/N) Σ ln(1 + exp(−yᵢ⟨aᵢ, x⟩)) + (l2/2)‖x‖²`.
///
/// Features are standard normal; labels are the sign of a random linear
/// score, flipped with probability 0.1. The stochastic oracle averages a
/// minibatch drawn uniformly with replacement; with `batch == n_samples` it
/// returns the full gradient.
///
/// `L = max‖aᵢ‖²/4 + l2`, a bound on the Hessian norm.
#[derive(Debug, Clone)]
pub struct Logistic {
    features: Vec<Vector>,
    labels: Vec<f64>,
    batch: usize,
    l2: f64,
    seed: u64,
    lipschitz: f64,
    max_row_norm_sq: f64,
    f_star: f64,
}

impl Logistic {
    pub fn new(n_samples: usize, n_features: usize, batch: usize, seed: u64) -> Result<Self> {
        Self::with_l2(n_samples, n_features, batch, seed, DEFAULT_L2)
    }

    pub fn with_l2(
        n_samples: usize,
        n_features: usize,
        batch: usize,
        seed: u64,
        l2: f64,
    ) -> Result<Self> {
        if n_samples == 0 || n_features == 0 {
            return Err(Error::param("n_samples", n_samples as f64, "dimensions must be >= 1"));
        }
        if batch == 0 || batch > n_samples {
            return Err(Error::param("batch", batch as f64, "must lie in 1..=n_samples"));
        }
        if !(l2 >= 0.0) {
            return Err(Error::param("l2", l2, "must be >= 0"));
        }
        let mut rng = RngStream::derive(seed, u64::MAX);
        let w: Vec<f64> = (0..n_features).map(|_| rng.normal()).collect();
        let mut features = Vec::with_capacity(n_samples);
        let mut labels = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let a: Vector = (0..n_features).map(|_| rng.normal()).collect();
            let score: f64 = a.iter().zip(&w).map(|(a, w)| a * w).sum();
            let mut y = if score >= 0.0 { 1.0 } else { -1.0 };
            if rng.uniform() < LABEL_NOISE {
                y = -y;
            }
            features.push(a);
            labels.push(y);
        }
        let max_row_norm_sq = features.iter().map(|a| a.norm_sq()).fold(0.0, f64::max);
        let mut p = Logistic {
            features,
            labels,
            batch,
            l2,
            seed,
            lipschitz: 0.25 * max_row_norm_sq + l2,
            max_row_norm_sq,
            f_star: f64::NAN,
        };
        p.f_star = p.solve_f_star();
        Ok(p)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    fn sample_loss(&self, i: usize, x: &Vector) -> f64 {
        let margin: f64 = self.labels[i] * dot(&self.features[i], x);
        softplus(-margin)
    }

    /// Adds the data-term gradient of sample `i`, scaled by `weight`, into `g`.
    fn add_sample_grad(&self, i: usize, x: &Vector, weight: f64, g: &mut Vector) {
        let y = self.labels[i];
        let margin = y * dot(&self.features[i], x);
        let coef = -y * sigmoid(-margin) * weight;
        g.axpy_in_place(coef, &self.features[i]);
    }

    // Accelerated gradient with adaptive restart; the objective is
    // l2-strongly convex so this converges to machine precision quickly.
    fn solve_f_star(&self) -> f64 {
        let n = self.features[0].len();
        let step = 1.0 / self.lipschitz;
        let mut x = Vector::zeros(n);
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut best = self.value(&x);
        for _ in 0..20_000 {
            let g = self.full_grad(&y);
            if g.norm_sq() < 1e-26 {
                break;
            }
            let mut next = y.clone();
            next.axpy_in_place(-step, &g);
            let fx = self.value(&next);
            let t_next = 0.5 * (1.0 + crate::math::sqrt(1.0 + 4.0 * t * t));
            if fx > best {
                // restart momentum
                y = x.clone();
                t = 1.0;
                continue;
            }
            best = fx;
            let mom = (t - 1.0) / t_next;
            y = next
                .iter()
                .zip(x.iter())
                .map(|(a, b)| a + mom * (a - b))
                .collect();
            x = next;
            t = t_next;
        }
        best
    }
}

fn dot(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b.iter()).map(|(a, b)| a * b).sum()
}

impl Problem for Logistic {
    fn describe(&self) -> String {
        format!(
            "logistic(n_samples={},n_features={},batch={},l2={},seed={})",
            self.labels.len(),
            self.features[0].len(),
            self.batch,
            self.l2,
            self.seed
        )
    }

    fn dim(&self) -> usize {
        self.features[0].len()
    }

    fn initial_point(&self) -> Vector {
        Vector::zeros(self.dim())
    }

    fn value(&self, x: &Vector) -> f64 {
        let n = self.labels.len() as f64;
        let data: f64 = (0..self.labels.len()).map(|i| self.sample_loss(i, x)).sum::<f64>() / n;
        data + 0.5 * self.l2 * x.norm_sq()
    }

    fn full_grad(&self, x: &Vector) -> Vector {
        let n = self.labels.len();
        let mut g = Vector::zeros(self.dim());
        for i in 0..n {
            self.add_sample_grad(i, x, 1.0 / n as f64, &mut g);
        }
        g.axpy_in_place(self.l2, x);
        g
    }

    fn stoch_grad(&self, x: &Vector, rng: &mut RngStream) -> Vector {
        if self.batch == self.labels.len() {
            return self.full_grad(x);
        }
        let mut g = Vector::zeros(self.dim());
        let w = 1.0 / self.batch as f64;
        for _ in 0..self.batch {
            let i = rng.index(self.labels.len());
            self.add_sample_grad(i, x, w, &mut g);
        }
        g.axpy_in_place(self.l2, x);
        g
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    /// Bound on a single sample's data-gradient norm², `max‖aᵢ‖²`.
    fn sigma_sq(&self) -> Option<f64> {
        Some(self.max_row_norm_sq)
    }

    fn f_star(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn is_deterministic(&self) -> bool {
        self.batch == self.labels.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::fd_gradient;
    use crate::rng::gaussian_vector;

    #[test]
    fn loss_at_origin_is_ln2() {
        let p = Logistic::new(200, 5, 10, 1).unwrap();
        assert!((p.value(&Vector::zeros(5)) - core::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn full_batch_is_deterministic() {
        let p = Logistic::new(50, 4, 50, 2).unwrap();
        let x = Vector::from([0.1, -0.2, 0.3, 0.0]);
        let mut rng = RngStream::new(0);
        assert_eq!(p.stoch_grad(&x, &mut rng), p.full_grad(&x));
        assert!(p.is_deterministic());
    }

    #[test]
    fn gradient_matches_fd() {
        let p = Logistic::new(100, 6, 8, 3).unwrap();
        let mut rng = RngStream::new(4);
        for _ in 0..10 {
            let x = gaussian_vector(&mut rng, 6, 1.0).unwrap();
            let fd = fd_gradient(&p, &x, 1e-6);
            assert!(fd.max_abs_diff(&p.full_grad(&x)) < 1e-8);
        }
    }

    #[test]
    fn f_star_is_a_lower_bound_and_stationary() {
        let p = Logistic::new(300, 5, 300, 5).unwrap();
        let fs = p.f_star().unwrap();
        assert!(fs < core::f64::consts::LN_2);
        let mut rng = RngStream::new(9);
        for _ in 0..50 {
            let x = gaussian_vector(&mut rng, 5, 0.5).unwrap();
            assert!(p.value(&x) >= fs - 1e-12);
        }
    }

    #[test]
    fn bad_batch_rejected() {
        assert!(Logistic::new(10, 2, 0, 0).is_err());
        assert!(Logistic::new(10, 2, 11, 0).is_err());
    }
}
