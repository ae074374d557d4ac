//! Dense `f64` vectors.
//!
//! All free functions are pure. The `*_in_place` methods are the only
//! operations that write to their receiver.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// Parameter, gradient or iterate of a fixed dimension `n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Vector(vec![value; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    /// `‖self − other‖²`.
    pub fn dist_sq(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// `‖self − other‖_∞`.
    pub fn max_abs_diff(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `self ← self + alpha·x`.
    pub fn axpy_in_place(&mut self, alpha: f64, x: &Vector) {
        debug_assert_eq!(self.len(), x.len());
        for (y, xi) in self.0.iter_mut().zip(&x.0) {
            *y += alpha * xi;
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        for y in self.0.iter_mut() {
            *y *= alpha;
        }
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(v: [f64; N]) -> Self {
        Vector(v.to_vec())
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        })
    }
}

/// `Σ aᵢbᵢ`.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Returns `alpha·x + y`.
pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Result<Vector> {
    check_len(x, y)?;
    Ok(x.iter().zip(y).map(|(xi, yi)| alpha * xi + yi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_small() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(dot(&[0.0; 3], &[5.0, -2.0, 7.5]).unwrap(), 0.0);
    }

    // Error-free transformation (Knuth two-sum / Dekker two-product) as an
    // independent oracle for the large-magnitude case.
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            let p = x * y;
            let e = x.mul_add(*y, -p);
            let (t, r) = two_sum(s, p);
            s = t;
            c += r + e;
        }
        s + c
    }

    #[test]
    fn dot_large_magnitude_within_one_ulp() {
        let a = [1e8, 1.0];
        let got = dot(&a, &a).unwrap();
        let oracle = compensated_dot(&a, &a);
        let ulp = f64::EPSILON * oracle.abs();
        assert!((got - oracle).abs() <= ulp, "{got} vs {oracle}");
        assert!((got - (1e16 + 1.0)).abs() <= 2.0);
    }

    #[test]
    fn dot_length_mismatch() {
        assert_eq!(
            dot(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch {
                expected: 1,
                found: 2
            })
        );
    }

    #[test]
    fn axpy_cases() {
        assert_eq!(
            axpy(2.0, &[1.0, 1.0], &[0.0, 1.0]).unwrap(),
            Vector::from([2.0, 3.0])
        );
        let x = [0.3, -1.7, 4.0];
        let y = [9.0, 8.0, 7.0];
        assert_eq!(axpy(0.0, &x, &y).unwrap().as_slice(), &y);
        assert_eq!(axpy(-1.0, &x, &x).unwrap(), Vector::zeros(3));
        assert!(axpy(1.0, &x, &[1.0]).is_err());
    }
}
