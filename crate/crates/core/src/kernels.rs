//! Kernels over transitions.
//!
//! Gaussian kernels are unnormalised: `k(x, y) = exp(-(x - y)ᵀ H⁻¹ (x - y))`,
//! with no ½ in the exponent and no `(2π)^{-d/2}|H|^{-1/2}` constant. Every
//! consumer uses kernel ratios or fixed points, so the constant cancels, and
//! values stay in `(0, 1]`.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("bandwidth matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("bandwidth matrix is not symmetric")]
    NotSymmetric,
    #[error("bandwidth matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Positive-definite kernel covariance with its inverse cached.
#[derive(Debug, Clone)]
pub struct Bandwidth {
    cov: DMatrix<f64>,
    inv: DMatrix<f64>,
    factor: DMatrix<f64>,
    /// Inverse diagonal when `cov` is diagonal; the hot path in the models.
    diag_inv: Option<Vec<f64>>,
}

impl Bandwidth {
    pub fn new(cov: DMatrix<f64>) -> Result<Self, KernelError> {
        if cov.nrows() != cov.ncols() {
            return Err(KernelError::NotSquare(cov.nrows(), cov.ncols()));
        }
        let scale = cov.abs().max().max(f64::MIN_POSITIVE);
        if (&cov - cov.transpose()).abs().max() > 1e-12 * scale {
            return Err(KernelError::NotSymmetric);
        }
        let chol = Cholesky::new(cov.clone()).ok_or(KernelError::NotPositiveDefinite)?;
        let factor = chol.l();
        if factor.diagonal().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(KernelError::NotPositiveDefinite);
        }
        let inv = chol.inverse();
        let n = cov.nrows();
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || cov[(i, j)] == 0.0));
        let diag_inv = is_diag.then(|| (0..n).map(|i| 1.0 / cov[(i, i)]).collect());
        Ok(Self {
            cov,
            inv,
            factor,
            diag_inv,
        })
    }

    /// One-dimensional bandwidth.
    pub fn scalar(h: f64) -> Result<Self, KernelError> {
        Self::isotropic(1, h)
    }

    /// `h · I` in `dim` dimensions.
    pub fn isotropic(dim: usize, h: f64) -> Result<Self, KernelError> {
        Self::new(DMatrix::from_diagonal_element(dim, dim, h))
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self, KernelError> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    /// Lower Cholesky factor, used to draw from `N(μ, H)`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `(x − y)ᵀ H⁻¹ (x − y)`.
    #[inline]
    pub fn mahalanobis_sq(&self, x: &[f64], y: &[f64]) -> f64 {
        assert!(
            x.len() == self.dim() && y.len() == self.dim(),
            "kernel dimension mismatch: {} / {} vs bandwidth {}",
            x.len(),
            y.len(),
            self.dim()
        );
        if let Some(d) = &self.diag_inv {
            return x
                .iter()
                .zip(y)
                .zip(d)
                .map(|((a, b), w)| (a - b) * (a - b) * w)
                .sum();
        }
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let di = x[i] - y[i];
            let mut row = 0.0;
            for j in 0..n {
                row += self.inv[(i, j)] * (x[j] - y[j]);
            }
            acc += di * row;
        }
        acc
    }
}

/// One agent–environment interaction `(s, a, s', r, γ)`.
///
/// `gamma` is the per-transition discount; `0` marks a terminal transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub s_next: Vec<f64>,
    pub r: f64,
    pub gamma: f64,
}

impl Transition {
    pub fn new(s: Vec<f64>, a: usize, s_next: Vec<f64>, r: f64, gamma: f64) -> Self {
        assert_eq!(s.len(), s_next.len(), "state and next state differ in dimension");
        assert!((0.0..=1.0).contains(&gamma), "discount {gamma} outside [0, 1]");
        Self {
            s,
            a,
            s_next,
            r,
            gamma,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.s.len()
    }

    /// The concatenated `(s', r, γ)` vector.
    pub fn outcome_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.s_next.len() + 2);
        v.extend_from_slice(&self.s_next);
        v.push(self.r);
        v.push(self.gamma);
        v
    }
}

/// A sampled `(s', r, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub s_next: Vec<f64>,
    pub r: f64,
    pub gamma: f64,
}

impl Outcome {
    /// Split a `(s', r, γ)` vector.
    pub fn from_vec(mut v: Vec<f64>) -> Self {
        assert!(v.len() >= 2);
        let gamma = v.pop().unwrap();
        let r = v.pop().unwrap();
        Self {
            s_next: v,
            r,
            gamma,
        }
    }
}

/// `exp(−(x−y)ᵀH⁻¹(x−y))`; panics on dimension mismatch.
#[inline]
pub fn gaussian_kernel(x: &[f64], y: &[f64], h: &Bandwidth) -> f64 {
    (-h.mahalanobis_sq(x, y)).exp()
}

#[inline]
pub fn action_kernel(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// `k_s(s₁,s₂) · k_a(a₁,a₂) · k_out((s'₁,r₁,γ₁),(s'₂,r₂,γ₂))`.
pub fn product_kernel(t1: &Transition, t2: &Transition, hs: &Bandwidth, hout: &Bandwidth) -> f64 {
    let ka = action_kernel(t1.a, t2.a);
    if ka == 0.0 {
        return 0.0;
    }
    gaussian_kernel(&t1.s, &t2.s, hs) * ka * gaussian_kernel(&t1.outcome_vec(), &t2.outcome_vec(), hout)
}
