//! Linear expectation model over a feature space.
//!
//! Per action: `F_a` maps features to expected next features, `b_a` maps
//! features to expected reward and the reverse matrix maps next features to
//! expected previous features. All three are fitted by least-mean-squares
//! steps on real transitions.

use crate::features::Phi;

/// Predictions with a norm above this are discarded.
pub const NORM_GUARD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynaModel {
    dim: usize,
    alpha: f64,
    /// Column-major `dim × dim` per action.
    forward: Vec<Vec<f64>>,
    reverse: Vec<Vec<f64>>,
    reward: Vec<Vec<f64>>,
}

impl LinearDynaModel {
    pub fn new(dim: usize, num_actions: usize, alpha: f64) -> Self {
        assert!(alpha > 0.0);
        Self {
            dim,
            alpha,
            forward: vec![vec![0.0; dim * dim]; num_actions],
            reverse: vec![vec![0.0; dim * dim]; num_actions],
            reward: vec![vec![0.0; dim]; num_actions],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(i, j)` of `F_a`.
    pub fn forward_entry(&self, a: usize, i: usize, j: usize) -> f64 {
        self.forward[a][j * self.dim + i]
    }

    pub fn reverse_entry(&self, a: usize, i: usize, j: usize) -> f64 {
        self.reverse[a][j * self.dim + i]
    }

    /// Fit one real transition. `target` is the next-state features that the
    /// forward model should predict (the zero vector on termination);
    /// `phi_next` is what the reverse model conditions on.
    pub fn update(&mut self, phi: &[usize], a: usize, r: f64, target: &[usize], phi_next: &[usize]) {
        let d = self.dim;
        let alpha = self.alpha;

        let mut err = matvec(&self.forward[a], d, &Phi::Active(phi.to_vec()));
        for v in &mut err {
            *v = -*v;
        }
        for &i in target {
            err[i] += 1.0;
        }
        for &j in phi {
            let col = &mut self.forward[a][j * d..(j + 1) * d];
            for (c, e) in col.iter_mut().zip(&err) {
                *c += alpha * e;
            }
        }

        let pred_r: f64 = phi.iter().map(|&j| self.reward[a][j]).sum();
        for &j in phi {
            self.reward[a][j] += alpha * (r - pred_r);
        }

        let mut err = matvec(&self.reverse[a], d, &Phi::Active(phi_next.to_vec()));
        for v in &mut err {
            *v = -*v;
        }
        for &i in phi {
            err[i] += 1.0;
        }
        for &j in phi_next {
            let col = &mut self.reverse[a][j * d..(j + 1) * d];
            for (c, e) in col.iter_mut().zip(&err) {
                *c += alpha * e;
            }
        }
    }

    /// Expected next features and reward; `None` if the prediction fails the
    /// norm guard.
    pub fn predict(&self, phi: &Phi, a: usize) -> Option<(Vec<f64>, f64)> {
        let next = matvec(&self.forward[a], self.dim, phi);
        let r: f64 = match phi {
            Phi::Active(idx) => idx.iter().map(|&j| self.reward[a][j]).sum(),
            Phi::Dense(v) => v.iter().zip(&self.reward[a]).map(|(x, w)| x * w).sum(),
        };
        guarded(next).filter(|_| r.is_finite()).map(|n| (n, r))
    }

    /// Expected previous features under `a`.
    pub fn predict_reverse(&self, phi_next: &Phi, a: usize) -> Option<Vec<f64>> {
        guarded(matvec(&self.reverse[a], self.dim, phi_next))
    }
}

fn guarded(v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm.is_finite() && norm <= NORM_GUARD).then_some(v)
}

fn matvec(m: &[f64], d: usize, phi: &Phi) -> Vec<f64> {
    let mut out = vec![0.0; d];
    let mut add_col = |j: usize, x: f64| {
        for (o, c) in out.iter_mut().zip(&m[j * d..(j + 1) * d]) {
            *o += x * c;
        }
    };
    match phi {
        Phi::Active(idx) => idx.iter().for_each(|&j| add_col(j, 1.0)),
        Phi::Dense(v) => v
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .for_each(|(j, x)| add_col(j, *x)),
    }
    out
}
