//! Benchmark environments.
//!
//! States are `Vec<f64>`: a cell index for the tabular grid, `(x, y)` for the
//! continuous grid and a position for river swim. Every step reports its own
//! discount, `0` on goal entry in episodic tasks.

mod continuous;
mod gridworld;
mod riverswim;

use std::path::PathBuf;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use continuous::ContinuousGridworld;
pub use gridworld::{GridLayout, LayoutError, TabularGridworld};
pub use riverswim::{fixed_policy_return, riverswim_optimal_return, RiverSwim, RIVER_GAMMA};

use crate::features::{FeatureMap, TileCoder};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub s_next: Vec<f64>,
    pub r: f64,
    pub gamma: f64,
    pub episode_end: bool,
}

pub trait Environment: Send {
    fn state_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Move to the start state and return it.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn step(&mut self, a: usize, rng: &mut dyn RngCore) -> EnvStep;
    fn state(&self) -> Vec<f64>;
    /// The feature map agents use on this domain.
    fn feature_map(&self) -> FeatureMap;
    /// Initial action value: optimistic where the domain calls for it.
    fn initial_value(&self) -> f64 {
        0.0
    }
}

/// Serializable description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    TabularGridworld {
        #[serde(default = "default_grid_size")]
        size: usize,
        #[serde(default)]
        stochastic: bool,
        /// Plain-text layout; overrides `size`.
        #[serde(default)]
        layout: Option<PathBuf>,
    },
    ContinuousGridworld {
        #[serde(default = "default_cont_noise")]
        step_noise_std: f64,
        #[serde(default = "default_success")]
        success_prob: f64,
    },
    RiverSwim {
        #[serde(default = "default_river_noise")]
        noise_std: f64,
    },
}

fn default_grid_size() -> usize {
    12
}
fn default_cont_noise() -> f64 {
    0.1
}
fn default_success() -> f64 {
    0.9
}
fn default_river_noise() -> f64 {
    0.02f64.sqrt()
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Environment>, LayoutError> {
        Ok(match self {
            EnvConfig::TabularGridworld { size, stochastic, layout } => {
                let layout = match layout {
                    Some(path) => GridLayout::load(path)?,
                    None => GridLayout::square(*size)?,
                };
                Box::new(TabularGridworld::new(layout, *stochastic))
            }
            EnvConfig::ContinuousGridworld {
                step_noise_std,
                success_prob,
            } => Box::new(ContinuousGridworld::new(*step_noise_std, *success_prob)),
            EnvConfig::RiverSwim { noise_std } => Box::new(RiverSwim::new(*noise_std)),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::TabularGridworld { .. } => "tabular_gridworld",
            EnvConfig::ContinuousGridworld { .. } => "continuous_gridworld",
            EnvConfig::RiverSwim { .. } => "river_swim",
        }
    }
}

/// 16 tiles per dimension, one tiling.
pub(crate) fn standard_tiles(dims: usize, memory_size: usize) -> FeatureMap {
    FeatureMap::Tiles(TileCoder::new(dims, 16, memory_size))
}
