//! Tile coding and the linear action-value function.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Single-tiling grid coder over `[0, 1]^dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileCoder {
    pub dims: usize,
    pub tiles_per_dim: usize,
    pub tilings: usize,
    pub memory_size: usize,
    /// Give every action its own block of indices.
    pub per_action: bool,
}

impl TileCoder {
    pub fn new(dims: usize, tiles_per_dim: usize, memory_size: usize) -> Self {
        let tc = Self {
            dims,
            tiles_per_dim,
            tilings: 1,
            memory_size,
            per_action: false,
        };
        assert!(tc.tile_count() <= memory_size, "memory too small for the tile grid");
        tc
    }

    /// Number of distinct tiles for one action.
    pub fn tile_count(&self) -> usize {
        self.tiles_per_dim.pow(self.dims as u32)
    }

    /// Active index per tiling: row-major grid cell, each coordinate clipped
    /// to `[0, 1]` and `1.0` mapped into the top tile.
    pub fn tiles(&self, s: &[f64]) -> Vec<usize> {
        assert_eq!(s.len(), self.dims, "state dimension mismatch");
        let t = self.tiles_per_dim;
        let mut index = 0;
        let mut stride = 1;
        for &x in s {
            let cell = ((x.clamp(0.0, 1.0) * t as f64).floor() as usize).min(t - 1);
            index += cell * stride;
            stride *= t;
        }
        vec![index]
    }

    /// Indices in the action's own block when `per_action` is set.
    pub fn action_tiles(&self, s: &[f64], a: usize) -> Vec<usize> {
        let mut idx = self.tiles(s);
        if self.per_action {
            for i in &mut idx {
                *i += a * self.tile_count();
                assert!(*i < self.memory_size, "action {a} exceeds tile memory");
            }
        }
        idx
    }
}

/// Maps an environment state to its binary features.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Tiles(TileCoder),
    /// State is `[index]`; one feature per index.
    OneHot { size: usize },
}

impl FeatureMap {
    /// Active feature indices.
    pub fn active(&self, s: &[f64]) -> Vec<usize> {
        match self {
            FeatureMap::Tiles(tc) => tc.tiles(s),
            // model-sampled states may sit off the integer grid
            FeatureMap::OneHot { size } => vec![(s[0].round().max(0.0) as usize).min(size - 1)],
        }
    }

    /// Size of the space the active indices live in.
    pub fn feature_count(&self) -> usize {
        match self {
            FeatureMap::Tiles(tc) => tc.tile_count(),
            FeatureMap::OneHot { size } => *size,
        }
    }

    /// Width of a weight vector.
    pub fn memory_size(&self) -> usize {
        match self {
            FeatureMap::Tiles(tc) => tc.memory_size,
            FeatureMap::OneHot { size } => *size,
        }
    }
}

/// A feature vector: binary active set or an arbitrary dense vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Phi {
    Active(Vec<usize>),
    Dense(Vec<f64>),
}

impl Phi {
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        match self {
            Phi::Active(idx) => {
                let mut v = vec![0.0; len];
                for &i in idx {
                    v[i] += 1.0;
                }
                v
            }
            Phi::Dense(v) => {
                let mut out = v.clone();
                out.resize(len.max(v.len()), 0.0);
                out
            }
        }
    }
}

/// Per-action weight vectors over a shared feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQ {
    weights: Vec<Vec<f64>>,
}

impl LinearQ {
    /// Weights set so that every state with one active feature has value
    /// `initial_value`.
    pub fn new(num_actions: usize, memory_size: usize, initial_value: f64) -> Self {
        Self {
            weights: vec![vec![initial_value; memory_size]; num_actions],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn value(&self, phi: &Phi, a: usize) -> f64 {
        let w = &self.weights[a];
        match phi {
            Phi::Active(idx) => idx.iter().map(|&i| w[i]).sum(),
            Phi::Dense(v) => {
                assert!(v.len() <= w.len(), "feature vector longer than weights");
                v.iter().zip(w).map(|(x, y)| x * y).sum()
            }
        }
    }

    pub fn values(&self, phi: &Phi) -> Vec<f64> {
        (0..self.weights.len()).map(|a| self.value(phi, a)).collect()
    }

    pub fn max_value(&self, phi: &Phi) -> f64 {
        self.values(phi).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `r + γ max_a' q(φ', a') − q(φ, a)`; the bootstrap is skipped when `γ = 0`.
    pub fn td_error(&self, phi: &Phi, a: usize, r: f64, gamma: f64, phi_next: &Phi) -> f64 {
        let boot = if gamma == 0.0 { 0.0 } else { gamma * self.max_value(phi_next) };
        r + boot - self.value(phi, a)
    }

    /// `w_a += step · φ`.
    pub fn add(&mut self, phi: &Phi, a: usize, step: f64) {
        let w = &mut self.weights[a];
        match phi {
            Phi::Active(idx) => {
                for &i in idx {
                    w[i] += step;
                }
            }
            Phi::Dense(v) => {
                for (wi, x) in w.iter_mut().zip(v) {
                    *wi += step * x;
                }
            }
        }
    }

    /// One Q-learning step; returns the TD error used.
    pub fn q_learning_update(&mut self, phi: &Phi, a: usize, r: f64, gamma: f64, phi_next: &Phi, alpha: f64) -> f64 {
        let delta = self.td_error(phi, a, r, gamma, phi_next);
        self.add(phi, a, alpha * delta);
        delta
    }
}

/// Greedy action with uniform tie-breaking.
pub fn greedy<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&a| values[a] == best).collect();
    match ties.len() {
        0 => rng.random_range(0..values.len()),
        1 => ties[0],
        n => ties[rng.random_range(0..n)],
    }
}

/// ε-greedy over action values.
pub fn select_action<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!((0.0..=1.0).contains(&epsilon));
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..values.len())
    } else {
        greedy(values, rng)
    }
}
