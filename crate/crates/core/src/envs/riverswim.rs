use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::{standard_tiles, EnvStep, Environment};
use crate::features::FeatureMap;
use crate::{derive_seed, rng_from_seed};

pub const RIVER_GAMMA: f64 = 0.99;
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
const MOVE: f64 = 0.1;
const START: f64 = 0.5;

/// Continuing river on `[0, 1]`: swimming right is unreliable and pushed
/// back by the current, swimming left always works.
#[derive(Debug, Clone)]
pub struct RiverSwim {
    s: f64,
    noise: Normal<f64>,
}

impl RiverSwim {
    pub fn new(noise_std: f64) -> Self {
        Self {
            s: START,
            noise: Normal::new(0.0, noise_std).expect("noise std must be finite and nonnegative"),
        }
    }

    /// Place the swimmer at `s`, clipped to `[0, 1]`.
    pub fn set_state(&mut self, s: f64) {
        self.s = s.clamp(0.0, 1.0);
    }

    pub fn reward(s: f64) -> f64 {
        if s <= 0.05 {
            0.005
        } else if s >= 0.95 {
            1.0
        } else {
            0.0
        }
    }

    /// Direction of travel: −1, 0 or +1.
    fn direction(&self, a: usize, rng: &mut dyn RngCore) -> i32 {
        if a == LEFT {
            return -1;
        }
        let u: f64 = rng.random();
        if self.s < 0.1 {
            if u < 0.4 {
                1
            } else {
                0
            }
        } else if self.s > 0.9 {
            if u < 0.4 {
                -1
            } else {
                0
            }
        } else if u < 0.35 {
            1
        } else if u < 0.4 {
            -1
        } else {
            0
        }
    }
}

impl Environment for RiverSwim {
    fn state_dim(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.s = START;
        self.state()
    }

    fn step(&mut self, a: usize, rng: &mut dyn RngCore) -> EnvStep {
        assert!(a < 2, "invalid action {a}");
        let dir = self.direction(a, rng);
        if dir != 0 {
            let amount = MOVE + self.noise.sample(rng);
            self.s = (self.s + dir as f64 * amount).clamp(0.0, 1.0);
        }
        EnvStep {
            s_next: self.state(),
            r: Self::reward(self.s),
            gamma: RIVER_GAMMA,
            episode_end: false,
        }
    }

    fn state(&self) -> Vec<f64> {
        vec![self.s]
    }

    fn feature_map(&self) -> FeatureMap {
        standard_tiles(1, 512)
    }

    fn initial_value(&self) -> f64 {
        1.0
    }
}

/// Mean cumulative reward of always swimming right over `steps` steps,
/// averaged over `seeds` independent runs.
pub fn riverswim_optimal_return(steps: usize, seeds: usize, noise_std: f64, base_seed: u64) -> f64 {
    assert!(seeds > 0);
    if steps == 0 {
        return 0.0;
    }
    let total: f64 = (0..seeds)
        .map(|k| fixed_policy_return(RIGHT, steps, noise_std, derive_seed(base_seed, k as u64)))
        .sum();
    total / seeds as f64
}

/// Cumulative reward of always taking `a`.
pub fn fixed_policy_return(a: usize, steps: usize, noise_std: f64, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut env = RiverSwim::new(noise_std);
    env.reset(&mut rng);
    (0..steps).map(|_| env.step(a, &mut rng).r).sum()
}
