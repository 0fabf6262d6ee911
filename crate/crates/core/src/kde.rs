//! Kernel density estimator over every observed transition.
//!
//! Cost is linear in the number of stored transitions; this model is the
//! reference the reweighted model is checked against, not something to plan
//! with over long runs.

use rand::Rng;

use crate::kernels::{action_kernel, gaussian_kernel, product_kernel, Bandwidth, Outcome, Transition};
use crate::linalg::{sample_categorical, sample_gaussian};
use crate::ModelError;

/// Conditioning mass below this is treated as no support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct KdeModel {
    data: Vec<Transition>,
    hs: Bandwidth,
    hout: Bandwidth,
}

impl KdeModel {
    pub fn new(hs: Bandwidth, hout: Bandwidth) -> Self {
        assert_eq!(hout.dim(), hs.dim() + 2, "output bandwidth must cover (s', r, γ)");
        Self {
            data: Vec::new(),
            hs,
            hout,
        }
    }

    pub fn push(&mut self, t: Transition) {
        assert_eq!(t.state_dim(), self.hs.dim());
        self.data.push(t);
    }

    pub fn data(&self) -> &[Transition] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Relative joint density `(1/T) Σ_i k(t, t_i)`.
    pub fn joint_density(&self, t: &Transition) -> Result<f64, ModelError> {
        if self.data.is_empty() {
            return Err(ModelError::EmptyModel);
        }
        let sum: f64 = self
            .data
            .iter()
            .map(|d| product_kernel(t, d, &self.hs, &self.hout))
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Mixture weights `w_i = k_s(s,s_i) k_a(a,a_i) / N_k(s,a)`.
    pub fn conditional_weights(&self, s: &[f64], a: usize) -> Result<Vec<f64>, ModelError> {
        if self.data.is_empty() {
            return Err(ModelError::EmptyModel);
        }
        let mut w: Vec<f64> = self
            .data
            .iter()
            .map(|d| {
                let ka = action_kernel(a, d.a);
                if ka == 0.0 {
                    0.0
                } else {
                    gaussian_kernel(s, &d.s, &self.hs) * ka
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total < SUPPORT_THRESHOLD {
            return Err(ModelError::NoSupport);
        }
        for v in &mut w {
            *v /= total;
        }
        Ok(w)
    }

    /// Draw a component by the conditional weights, then a Gaussian around
    /// its `(s', r, γ)` with covariance `H_out`.
    pub fn conditional_sample<R: Rng + ?Sized>(
        &self,
        s: &[f64],
        a: usize,
        rng: &mut R,
    ) -> Result<Outcome, ModelError> {
        let w = self.conditional_weights(s, a)?;
        let j = sample_categorical(&w, rng);
        let center = self.data[j].outcome_vec();
        Ok(Outcome::from_vec(sample_gaussian(&center, self.hout.factor(), rng)))
    }

    /// Index of the component `conditional_sample` would pick, for frequency tests.
    pub fn sample_component<R: Rng + ?Sized>(&self, s: &[f64], a: usize, rng: &mut R) -> Result<usize, ModelError> {
        let w = self.conditional_weights(s, a)?;
        Ok(sample_categorical(&w, rng))
    }
}
