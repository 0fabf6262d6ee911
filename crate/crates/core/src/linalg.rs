//! Small dense linear-algebra and sampling helpers shared by the density models.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// Symmetric square-root factor `L` with `L Lᵀ = m` for a positive
/// semidefinite matrix. Negative eigenvalues from round-off are clamped to
/// zero, so the zero matrix maps to the zero factor.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = m.amax();
    if scale == 0.0 || !scale.is_finite() {
        return DMatrix::zeros(m.nrows(), m.ncols());
    }
    // factor at unit scale so subnormal entries cannot poison the result
    let unit = m / scale;
    let root = scale.sqrt();
    if let Some(chol) = Cholesky::new(unit.clone()) {
        let l = chol.l() * root;
        if l.iter().all(|v| v.is_finite()) {
            return l;
        }
    }
    let eig = SymmetricEigen::new(unit);
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt() * root);
    let f = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt);
    if f.iter().all(|v| v.is_finite()) {
        f
    } else {
        DMatrix::zeros(m.nrows(), m.ncols())
    }
}

/// Draw `mean + factor · z` with `z ~ N(0, I)`.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &[f64], factor: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let d = mean.len();
    debug_assert_eq!(factor.nrows(), d);
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = mean.to_vec();
    // eigen-based factors are not triangular, so use the full product
    for (i, o) in out.iter_mut().enumerate() {
        *o += z.iter().enumerate().map(|(j, zj)| factor[(i, j)] * zj).sum::<f64>();
    }
    out
}

/// Draw an index with probability proportional to `weights`.
///
/// Weights must be nonnegative with a positive sum.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0);
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        last_positive = i;
        if u < *w {
            return i;
        }
        u -= w;
    }
    last_positive
}

/// `log det(m)` via Cholesky; `None` if `m` is not positive definite.
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    Some(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Streaming mean and covariance (Welford).
#[derive(Debug, Clone)]
pub struct RunningCovariance {
    count: u64,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl RunningCovariance {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let x = DVector::from_column_slice(x);
        let delta = &x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = &x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Sample covariance (divides by `n - 1`); zero before two samples.
    pub fn covariance(&self) -> DMatrix<f64> {
        if self.count < 2 {
            return DMatrix::zeros(self.mean.len(), self.mean.len());
        }
        let c = &self.m2 / (self.count - 1) as f64;
        (&c + c.transpose()) * 0.5
    }
}
