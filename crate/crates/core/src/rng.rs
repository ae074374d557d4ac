//! Seeded sampling streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::vector::Vector;

/// Deterministic source of `ξ_k` samples.
///
/// Streams derived from the same seed with different run indices use
/// disjoint ChaCha stream ids, so they never alias.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Generator name recorded in trace metadata.
    pub const GENERATOR: &'static str = "ChaCha8Rng";

    pub fn new(seed: u64) -> Self {
        Self::derive(seed, 0)
    }

    /// Independent stream for the `run_index`-th run under `seed`.
    pub fn derive(seed: u64, run_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run_index);
        RngStream {
            seed,
            stream: run_index,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// One standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }
}

/// `n` i.i.d. draws from `Normal(0, sigma²)`.
pub fn gaussian_vector(rng: &mut RngStream, n: usize, sigma: f64) -> Result<Vector> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param("sigma", sigma, "must be finite and >= 0"));
    }
    if n == 0 {
        return Err(Error::param("n", 0.0, "must be >= 1"));
    }
    if sigma == 0.0 {
        return Ok(Vector::zeros(n));
    }
    Ok((0..n).map(|_| sigma * rng.normal()).collect())
}
