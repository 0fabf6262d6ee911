//! Reweighted experience model.
//!
//! A budgeted set of prototype transitions, each with a forward coefficient
//! `c` (how likely its outcome is given its state-action) and a reverse
//! coefficient `c_r` (how likely its state is given its next state and
//! action). Conditioning on `(s, a)` reweights the prototypes with the state
//! kernel, giving a Gaussian mixture over `(s', r, γ)`; conditioning on
//! `(s', a)` gives a mixture over predecessor states.

pub mod selection;

use std::io;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::{gaussian_kernel, Bandwidth, Outcome, Transition};
use crate::linalg::{psd_factor, sample_categorical, sample_gaussian};
use crate::ModelError;
pub use selection::{Decision, PrototypeSelector, SelectorConfig};

/// `exp(-x)` underflows to zero beyond this; used to skip work.
const EXP_CUTOFF: f64 = 745.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RemConfig {
    pub budget: usize,
    /// Diagonal entry of the state bandwidth `H_s`.
    pub state_bandwidth: f64,
    /// Rate of the exponential average of conditional covariances that forms
    /// the output bandwidth.
    pub covariance_rate: f64,
    /// Ridge added to the averaged covariance.
    pub covariance_floor: f64,
    /// Conditioning mass below this means no support.
    pub support_threshold: f64,
    pub utility_threshold: f64,
    pub recluster_period: usize,
    /// Committed swaps between re-estimates of the selection metric.
    pub metric_refresh_period: usize,
}

impl Default for RemConfig {
    fn default() -> Self {
        Self {
            budget: 1000,
            state_bandwidth: 1e-4,
            covariance_rate: 0.001,
            covariance_floor: 1e-6,
            support_threshold: 1e-12,
            utility_threshold: 0.01,
            recluster_period: 10,
            metric_refresh_period: 1000,
        }
    }
}

impl RemConfig {
    fn selector_config(&self) -> SelectorConfig {
        SelectorConfig {
            budget: self.budget,
            utility_threshold: self.utility_threshold,
            recluster_period: self.recluster_period,
            ..SelectorConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub t: Transition,
    pub c: f64,
    pub c_r: f64,
}

/// Sparse mixture weights: `weights[k]` belongs to prototype `indices[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// How the output bandwidth used in coefficient updates is obtained.
#[derive(Debug, Clone)]
enum OutputBandwidth {
    /// Exponential average of conditional covariances at visited `(s, a)`.
    Running { sum: DMatrix<f64>, weight: f64 },
    Fixed,
}

#[derive(Debug, Clone)]
pub struct RemModel {
    config: RemConfig,
    state_dim: usize,
    prototypes: Vec<Prototype>,
    by_action: Vec<Vec<usize>>,
    hs: Bandwidth,
    hout: Bandwidth,
    hout_mode: OutputBandwidth,
    selector: Option<PrototypeSelector>,
}

impl RemModel {
    pub fn new(config: RemConfig, state_dim: usize, seed: u64) -> Self {
        assert!(state_dim > 0);
        let hs = Bandwidth::isotropic(state_dim, config.state_bandwidth).expect("state bandwidth must be positive");
        let out_dim = state_dim + 2;
        let hout = Bandwidth::isotropic(out_dim, config.covariance_floor).expect("covariance floor must be positive");
        let selector = Some(PrototypeSelector::new(config.selector_config(), seed));
        Self {
            config,
            state_dim,
            prototypes: Vec::new(),
            by_action: Vec::new(),
            hs,
            hout,
            hout_mode: OutputBandwidth::Running {
                sum: DMatrix::zeros(out_dim, out_dim),
                weight: 0.0,
            },
            selector,
        }
    }

    /// A model over a fixed prototype set: updates only touch coefficients.
    /// Coefficients start at 1.
    pub fn with_fixed_prototypes(config: RemConfig, prototypes: Vec<Transition>, hs: Bandwidth, hout: Bandwidth) -> Self {
        let state_dim = hs.dim();
        assert_eq!(hout.dim(), state_dim + 2);
        let mut m = Self {
            config,
            state_dim,
            prototypes: Vec::new(),
            by_action: Vec::new(),
            hs,
            hout,
            hout_mode: OutputBandwidth::Fixed,
            selector: None,
        };
        for t in prototypes {
            assert_eq!(t.state_dim(), state_dim);
            m.insert_prototype(None, t);
        }
        m
    }

    pub fn config(&self) -> &RemConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn prototypes(&self) -> &[Prototype] {
        &self.prototypes
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn state_bandwidth(&self) -> &Bandwidth {
        &self.hs
    }

    pub fn output_bandwidth(&self) -> &Bandwidth {
        &self.hout
    }

    pub fn selector(&self) -> Option<&PrototypeSelector> {
        self.selector.as_ref()
    }

    /// Overwrite coefficients, e.g. with closed-form values in tests.
    pub fn set_coefficients(&mut self, i: usize, c: f64, c_r: f64) {
        assert!((0.0..=1.0).contains(&c) && (0.0..=1.0).contains(&c_r));
        self.prototypes[i].c = c;
        self.prototypes[i].c_r = c_r;
    }

    fn insert_prototype(&mut self, slot: Option<usize>, t: Transition) {
        let a = t.a;
        if self.by_action.len() <= a {
            self.by_action.resize(a + 1, Vec::new());
        }
        let p = Prototype { t, c: 1.0, c_r: 1.0 };
        match slot {
            Some(i) if i < self.prototypes.len() => {
                let old = self.prototypes[i].t.a;
                self.by_action[old].retain(|&j| j != i);
                self.prototypes[i] = p;
                self.by_action[a].push(i);
            }
            _ => {
                self.prototypes.push(p);
                self.by_action[a].push(self.prototypes.len() - 1);
            }
        }
    }

    /// Offer `t` to the selector, update every coefficient with `t`, then fold
    /// the conditional covariance at `(s_t, a_t)` into the output bandwidth.
    pub fn update(&mut self, t: &Transition) {
        assert_eq!(t.state_dim(), self.state_dim, "transition dimension mismatch");
        if let Some(sel) = self.selector.as_mut() {
            let decision = sel.consider(t);
            if sel.swaps_since_refresh() >= self.config.metric_refresh_period {
                sel.refresh_metric();
            }
            if let Decision::AddedToFreeSlot(i) | Decision::Swapped(i) = decision {
                self.insert_prototype(Some(i), t.clone());
            }
        }
        self.update_coefficients(t);
        self.update_output_bandwidth(t);
    }

    /// The coefficient step alone.
    pub fn update_coefficients(&mut self, t: &Transition) {
        let Some(block) = self.by_action.get(t.a) else { return };
        let out_t = t.outcome_vec();
        for &i in block {
            let p = &mut self.prototypes[i];
            let ms = self.hs.mahalanobis_sq(&t.s, &p.t.s);
            if ms < EXP_CUTOFF {
                let rho = (-ms).exp();
                let k_out = gaussian_kernel(&out_t, &p.t.outcome_vec(), &self.hout);
                p.c = ((1.0 - rho) * p.c + rho * k_out).clamp(0.0, 1.0);
            }
            let mr = self.hs.mahalanobis_sq(&t.s_next, &p.t.s_next);
            if mr < EXP_CUTOFF {
                let rho_r = (-mr).exp();
                let k = (-ms).exp();
                p.c_r = ((1.0 - rho_r) * p.c_r + rho_r * k).clamp(0.0, 1.0);
            }
        }
    }

    fn update_output_bandwidth(&mut self, t: &Transition) {
        let OutputBandwidth::Running { sum, weight } = &mut self.hout_mode else { return };
        let Ok(mix) = forward_mixture(&self.prototypes, &self.by_action, &self.hs, self.config.support_threshold, &t.s, t.a)
        else {
            return;
        };
        let cov = mixture_covariance(&self.prototypes, &mix);
        let lambda = self.config.covariance_rate;
        *sum = &*sum * (1.0 - lambda) + cov * lambda;
        *weight = *weight * (1.0 - lambda) + lambda;
        let n = sum.nrows();
        let avg = &*sum / *weight + DMatrix::identity(n, n) * self.config.covariance_floor;
        let sym = (&avg + avg.transpose()) * 0.5;
        if let Ok(h) = Bandwidth::new(sym) {
            self.hout = h;
        }
    }

    /// Sparse forward weights `β(s, a)`.
    pub fn forward_mixture(&self, s: &[f64], a: usize) -> Result<Mixture, ModelError> {
        if self.prototypes.is_empty() {
            return Err(ModelError::EmptyModel);
        }
        forward_mixture(&self.prototypes, &self.by_action, &self.hs, self.config.support_threshold, s, a)
    }

    /// Dense `β(s, a)` over all prototypes.
    pub fn beta(&self, s: &[f64], a: usize) -> Result<Vec<f64>, ModelError> {
        let mix = self.forward_mixture(s, a)?;
        let mut dense = vec![0.0; self.prototypes.len()];
        for (i, w) in mix.indices.iter().zip(&mix.weights) {
            dense[*i] = *w;
        }
        Ok(dense)
    }

    pub fn conditional_mean(&self, s: &[f64], a: usize) -> Result<Vec<f64>, ModelError> {
        let mix = self.forward_mixture(s, a)?;
        Ok(mixture_mean(&self.prototypes, &mix))
    }

    pub fn conditional_covariance(&self, s: &[f64], a: usize) -> Result<DMatrix<f64>, ModelError> {
        let mix = self.forward_mixture(s, a)?;
        Ok(mixture_covariance(&self.prototypes, &mix))
    }

    /// Draw a component `j ~ β(s, a)`, then a Gaussian around its outcome with
    /// the conditional covariance at `(s, a)`. `γ` is clamped to `[0, 1]`.
    pub fn sample_forward<R: Rng + ?Sized>(&self, s: &[f64], a: usize, rng: &mut R) -> Result<Outcome, ModelError> {
        let mix = self.forward_mixture(s, a)?;
        let k = sample_categorical(&mix.weights, rng);
        let j = mix.indices[k];
        let cov = mixture_covariance(&self.prototypes, &mix);
        let x = sample_gaussian(&self.prototypes[j].t.outcome_vec(), &psd_factor(&cov), rng);
        Ok(Outcome::from_vec(x))
    }

    /// Index of the component `sample_forward` would draw.
    pub fn sample_component<R: Rng + ?Sized>(&self, s: &[f64], a: usize, rng: &mut R) -> Result<usize, ModelError> {
        let mix = self.forward_mixture(s, a)?;
        Ok(mix.indices[sample_categorical(&mix.weights, rng)])
    }

    /// Reverse weights `β_r(s', a)`; `None` when the reverse mass is below the
    /// support threshold.
    pub fn reverse_mixture(&self, s_next: &[f64], a: usize) -> Option<Mixture> {
        let block = self.by_action.get(a)?;
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        for &i in block {
            let p = &self.prototypes[i];
            let m = self.hs.mahalanobis_sq(s_next, &p.t.s_next);
            if m >= EXP_CUTOFF || p.c_r == 0.0 {
                continue;
            }
            indices.push(i);
            weights.push(p.c_r * (-m).exp());
        }
        let total: f64 = weights.iter().sum();
        if total <= self.config.support_threshold {
            return None;
        }
        for w in &mut weights {
            *w /= total;
        }
        Some(Mixture { indices, weights })
    }

    /// Up to `f` predecessor states of `s_next` under `a`: `j ~ β_r`, then a
    /// Gaussian around `s_j` with covariance `H_s`. Empty when `a` has no
    /// reverse support at `s_next`.
    pub fn sample_predecessors<R: Rng + ?Sized>(&self, s_next: &[f64], a: usize, f: usize, rng: &mut R) -> Vec<Vec<f64>> {
        match self.reverse_mixture(s_next, a) {
            None => Vec::new(),
            Some(mix) => (0..f).map(|_| self.sample_from_reverse(&mix, rng)).collect(),
        }
    }

    /// One predecessor draw from a precomputed reverse mixture.
    pub fn sample_from_reverse<R: Rng + ?Sized>(&self, mix: &Mixture, rng: &mut R) -> Vec<f64> {
        let j = mix.indices[sample_categorical(&mix.weights, rng)];
        sample_gaussian(&self.prototypes[j].t.s, self.hs.factor(), rng)
    }

    pub fn snapshot(&self) -> RemSnapshot {
        RemSnapshot {
            version: SNAPSHOT_VERSION,
            budget: self.config.budget,
            state_dim: self.state_dim,
            config: self.config.clone(),
            state_bandwidth: matrix_rows(self.hs.matrix()),
            output_bandwidth: matrix_rows(self.hout.matrix()),
            prototypes: self.prototypes.clone(),
        }
    }

    /// Rebuild a model from a snapshot. Selection restarts from the stored
    /// prototypes; the output bandwidth resumes from the stored matrix.
    pub fn from_snapshot(snap: RemSnapshot, seed: u64) -> Result<Self, SnapshotError> {
        if snap.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version(snap.version));
        }
        if snap.prototypes.len() > snap.budget {
            return Err(SnapshotError::Invalid("more prototypes than budget".into()));
        }
        let hs = Bandwidth::new(rows_matrix(&snap.state_bandwidth, snap.state_dim)?)
            .map_err(|e| SnapshotError::Invalid(e.to_string()))?;
        let out = rows_matrix(&snap.output_bandwidth, snap.state_dim + 2)?;
        let hout = Bandwidth::new(out.clone()).map_err(|e| SnapshotError::Invalid(e.to_string()))?;
        let mut m = Self::new(snap.config.clone(), snap.state_dim, seed);
        m.hs = hs;
        m.hout = hout;
        let n = out.nrows();
        m.hout_mode = OutputBandwidth::Running {
            sum: out - DMatrix::identity(n, n) * snap.config.covariance_floor,
            weight: 1.0,
        };
        let ts: Vec<Transition> = snap.prototypes.iter().map(|p| p.t.clone()).collect();
        m.selector = Some(PrototypeSelector::restore(snap.config.selector_config(), &ts, seed));
        for p in snap.prototypes {
            if p.t.state_dim() != snap.state_dim || !(0.0..=1.0).contains(&p.c) || !(0.0..=1.0).contains(&p.c_r) {
                return Err(SnapshotError::Invalid("bad prototype record".into()));
            }
            m.insert_prototype(None, p.t);
            let last = m.prototypes.len() - 1;
            m.prototypes[last].c = p.c;
            m.prototypes[last].c_r = p.c_r;
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        let file = io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &self.snapshot())?;
        Ok(())
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self, SnapshotError> {
        let file = io::BufReader::new(std::fs::File::open(path)?);
        let snap: RemSnapshot = serde_json::from_reader(file)?;
        Self::from_snapshot(snap, seed)
    }
}

fn forward_mixture(
    prototypes: &[Prototype],
    by_action: &[Vec<usize>],
    hs: &Bandwidth,
    threshold: f64,
    s: &[f64],
    a: usize,
) -> Result<Mixture, ModelError> {
    let Some(block) = by_action.get(a) else {
        return Err(ModelError::NoSupport);
    };
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    for &i in block {
        let p = &prototypes[i];
        let m = hs.mahalanobis_sq(s, &p.t.s);
        if m >= EXP_CUTOFF || p.c == 0.0 {
            continue;
        }
        indices.push(i);
        weights.push(p.c * (-m).exp());
    }
    let total: f64 = weights.iter().sum();
    if !(total >= threshold) {
        return Err(ModelError::NoSupport);
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(Mixture { indices, weights })
}

fn mixture_mean(prototypes: &[Prototype], mix: &Mixture) -> Vec<f64> {
    let dim = prototypes[mix.indices[0]].t.state_dim() + 2;
    let mut mu = vec![0.0; dim];
    for (&i, &w) in mix.indices.iter().zip(&mix.weights) {
        for (m, x) in mu.iter_mut().zip(prototypes[i].t.outcome_vec()) {
            *m += w * x;
        }
    }
    mu
}

/// `Σ β_i (x_i − μ)(x_i − μ)ᵀ`: symmetric and PSD by construction.
fn mixture_covariance(prototypes: &[Prototype], mix: &Mixture) -> DMatrix<f64> {
    let mu = mixture_mean(prototypes, mix);
    let dim = mu.len();
    let mut cov = DMatrix::zeros(dim, dim);
    for (&i, &w) in mix.indices.iter().zip(&mix.weights) {
        let x = prototypes[i].t.outcome_vec();
        let d: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
        for r in 0..dim {
            for c in 0..=r {
                let v = w * d[r] * d[c];
                cov[(r, c)] += v;
                if r != c {
                    cov[(c, r)] += v;
                }
            }
        }
    }
    cov
}

/// Theorem-1 closed form for one prototype's coefficient: the
/// `ρ`-weighted average of `k_out` over a dataset.
pub fn closed_form_c(data: &[Transition], proto: &Transition, hs: &Bandwidth, hout: &Bandwidth) -> Result<f64, ModelError> {
    let out_p = proto.outcome_vec();
    let mut num = 0.0;
    let mut den = 0.0;
    for t in data {
        if t.a != proto.a {
            continue;
        }
        let rho = gaussian_kernel(&t.s, &proto.s, hs);
        den += rho;
        num += rho * gaussian_kernel(&t.outcome_vec(), &out_p, hout);
    }
    if den <= 0.0 {
        return Err(ModelError::NoSupport);
    }
    Ok(num / den)
}

pub const SNAPSHOT_VERSION: u32 = 1;

/// On-disk form of a model. Header fields come first, then prototype records
/// in slot order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemSnapshot {
    pub version: u32,
    pub budget: usize,
    pub state_dim: usize,
    pub config: RemConfig,
    pub state_bandwidth: Vec<Vec<f64>>,
    pub output_bandwidth: Vec<Vec<f64>>,
    pub prototypes: Vec<Prototype>,
}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("invalid snapshot: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>, SnapshotError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(SnapshotError::Invalid(format!("expected a {dim}x{dim} matrix")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}
