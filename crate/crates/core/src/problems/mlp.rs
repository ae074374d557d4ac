use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::Problem;
use crate::error::{Error, Result};
use crate::math::{cos, exp, ln, sin, sqrt, tanh};
use crate::rng::RngStream;
use crate::vector::Vector;

/// Two-layer tanh network with a softmax cross-entropy head, trained on a
/// synthetic two-class spiral in the plane.
///
/// Parameters are flattened as `[W1 (h×2), b1 (h), W2 (2×h), b2 (2)]`,
/// row-major. Gradients are computed by hand-written backpropagation.
#[derive(Debug, Clone)]
pub struct TinyMlp {
    hidden: usize,
    inputs: Vec<[f64; 2]>,
    labels: Vec<usize>,
    batch: usize,
    seed: u64,
    x0: Vector,
}

const CLASSES: usize = 2;

impl TinyMlp {
    pub fn new(n_hidden: usize, n_samples: usize, batch: usize, seed: u64) -> Result<Self> {
        let mut rng = RngStream::derive(seed, u64::MAX);
        let mut inputs = Vec::with_capacity(n_samples);
        let mut labels = Vec::with_capacity(n_samples);
        for i in 0..n_samples {
            let class = i % CLASSES;
            let t = 0.1 + 0.9 * rng.uniform();
            let angle = 2.5 * PI * t + PI * class as f64;
            let noise = 0.03;
            inputs.push([
                t * cos(angle) + noise * rng.normal(),
                t * sin(angle) + noise * rng.normal(),
            ]);
            labels.push(class);
        }
        let mut p = Self::from_data(n_hidden, inputs, labels, batch)?;
        p.seed = seed;
        p.x0 = p.glorot_init(&mut RngStream::derive(seed, u64::MAX - 1));
        Ok(p)
    }

    /// Network over caller-provided samples; initial point is all zeros.
    pub fn from_data(
        n_hidden: usize,
        inputs: Vec<[f64; 2]>,
        labels: Vec<usize>,
        batch: usize,
    ) -> Result<Self> {
        if n_hidden < 2 {
            return Err(Error::param("n_hidden", n_hidden as f64, "must be >= 2"));
        }
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::Usage(format!(
                "need matching, non-empty inputs and labels ({} vs {})",
                inputs.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l >= CLASSES) {
            return Err(Error::Usage("labels must be 0 or 1".into()));
        }
        if batch == 0 || batch > inputs.len() {
            return Err(Error::param("batch", batch as f64, "must lie in 1..=n_samples"));
        }
        let dim = param_count(n_hidden);
        Ok(TinyMlp {
            hidden: n_hidden,
            inputs,
            labels,
            batch,
            seed: 0,
            x0: Vector::zeros(dim),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    fn glorot_init(&self, rng: &mut RngStream) -> Vector {
        let h = self.hidden;
        let s1 = sqrt(2.0 / (2.0 + h as f64));
        let s2 = sqrt(2.0 / (h as f64 + CLASSES as f64));
        let mut x = Vector::zeros(param_count(h));
        let l = Layout::new(h);
        for v in &mut x[l.w1..l.b1] {
            *v = s1 * rng.normal();
        }
        for v in &mut x[l.w2..l.b2] {
            *v = s2 * rng.normal();
        }
        x
    }

    /// Loss of one sample; accumulates `weight · ∇` into `grad` when given.
    fn sample(&self, i: usize, x: &Vector, grad: Option<(&mut Vector, f64)>) -> f64 {
        let h = self.hidden;
        let l = Layout::new(h);
        let a = self.inputs[i];
        let mut hidden = vec![0.0; h];
        for (j, hj) in hidden.iter_mut().enumerate() {
            let pre = x[l.w1 + 2 * j] * a[0] + x[l.w1 + 2 * j + 1] * a[1] + x[l.b1 + j];
            *hj = tanh(pre);
        }
        let mut logits = [0.0; CLASSES];
        for (c, lc) in logits.iter_mut().enumerate() {
            *lc = x[l.b2 + c]
                + hidden
                    .iter()
                    .enumerate()
                    .map(|(j, hj)| x[l.w2 + c * h + j] * hj)
                    .sum::<f64>();
        }
        let m = logits[0].max(logits[1]);
        let lse = m + ln(logits.iter().map(|z| exp(z - m)).sum::<f64>());
        let y = self.labels[i];
        let loss = lse - logits[y];

        if let Some((g, weight)) = grad {
            let mut dlogits = [0.0; CLASSES];
            for c in 0..CLASSES {
                dlogits[c] = exp(logits[c] - lse) - if c == y { 1.0 } else { 0.0 };
                dlogits[c] *= weight;
            }
            for c in 0..CLASSES {
                g[l.b2 + c] += dlogits[c];
                for j in 0..h {
                    g[l.w2 + c * h + j] += dlogits[c] * hidden[j];
                }
            }
            for j in 0..h {
                let dh: f64 = (0..CLASSES).map(|c| x[l.w2 + c * h + j] * dlogits[c]).sum();
                let dpre = dh * (1.0 - hidden[j] * hidden[j]);
                g[l.w1 + 2 * j] += dpre * a[0];
                g[l.w1 + 2 * j + 1] += dpre * a[1];
                g[l.b1 + j] += dpre;
            }
        }
        loss
    }
}

fn param_count(h: usize) -> usize {
    2 * h + h + CLASSES * h + CLASSES
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl Layout {
    fn new(h: usize) -> Self {
        Layout {
            w1: 0,
            b1: 2 * h,
            w2: 3 * h,
            b2: 3 * h + CLASSES * h,
        }
    }
}

impl Problem for TinyMlp {
    fn describe(&self) -> String {
        format!(
            "tiny_mlp(n_hidden={},n_samples={},batch={},seed={})",
            self.hidden,
            self.labels.len(),
            self.batch,
            self.seed
        )
    }

    fn dim(&self) -> usize {
        param_count(self.hidden)
    }

    fn initial_point(&self) -> Vector {
        self.x0.clone()
    }

    fn value(&self, x: &Vector) -> f64 {
        let n = self.labels.len();
        (0..n).map(|i| self.sample(i, x, None)).sum::<f64>() / n as f64
    }

    fn full_grad(&self, x: &Vector) -> Vector {
        let n = self.labels.len();
        let mut g = Vector::zeros(self.dim());
        for i in 0..n {
            self.sample(i, x, Some((&mut g, 1.0 / n as f64)));
        }
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
            self.sample(i, x, Some((&mut g, w)));
        }
        g
    }

    fn smoothness(&self) -> Option<f64> {
        None
    }

    fn sigma_sq(&self) -> Option<f64> {
        None
    }

    fn f_star(&self) -> Option<f64> {
        None
    }

    fn is_deterministic(&self) -> bool {
        self.batch == self.labels.len()
    }
}
