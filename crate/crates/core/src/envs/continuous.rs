use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::{standard_tiles, EnvStep, Environment};
use crate::features::FeatureMap;

pub const CONT_GAMMA: f64 = 0.95;
const STEP: f64 = 0.05;
/// Wall spans this x-range below `HOLE_Y`; above it is the hole.
const WALL_X: (f64, f64) = (0.5, 0.7);
const HOLE_Y: f64 = 0.8;
const START: [f64; 2] = [0.0, 1.0];
const GOAL: f64 = 0.95;

/// Unit square with a wall of width 0.2 and an opening at its top.
#[derive(Debug, Clone)]
pub struct ContinuousGridworld {
    pos: [f64; 2],
    noise: Normal<f64>,
    success_prob: f64,
}

impl ContinuousGridworld {
    pub fn new(step_noise_std: f64, success_prob: f64) -> Self {
        assert!((0.0..=1.0).contains(&success_prob));
        Self {
            pos: START,
            noise: Normal::new(0.0, step_noise_std).expect("noise std must be finite and nonnegative"),
            success_prob,
        }
    }

    /// True inside the wall, excluding the opening.
    pub fn in_wall(x: f64, y: f64) -> bool {
        (WALL_X.0..=WALL_X.1).contains(&x) && y < HOLE_Y
    }

    /// Whether the axis-aligned segment between two points touches the wall.
    pub fn crosses_wall(from: [f64; 2], to: [f64; 2]) -> bool {
        let (x0, x1) = (from[0].min(to[0]), from[0].max(to[0]));
        let (y0, y1) = (from[1].min(to[1]), from[1].max(to[1]));
        x1 >= WALL_X.0 && x0 <= WALL_X.1 && y0 < HOLE_Y && y1 >= 0.0
    }

    pub fn set_position(&mut self, pos: [f64; 2]) {
        assert!(!Self::in_wall(pos[0], pos[1]));
        self.pos = pos;
    }
}

impl Environment for ContinuousGridworld {
    fn state_dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.pos = START;
        self.state()
    }

    fn step(&mut self, a: usize, rng: &mut dyn RngCore) -> EnvStep {
        assert!(a < 4, "invalid action {a}");
        let dir = if rng.random::<f64>() < self.success_prob {
            a
        } else {
            rng.random_range(0..4)
        };
        let len = STEP + self.noise.sample(rng);
        let (dx, dy) = match dir {
            0 => (0.0, len),
            1 => (0.0, -len),
            2 => (-len, 0.0),
            _ => (len, 0.0),
        };
        let to = [(self.pos[0] + dx).clamp(0.0, 1.0), (self.pos[1] + dy).clamp(0.0, 1.0)];
        if !Self::crosses_wall(self.pos, to) {
            self.pos = to;
        }
        let at_goal = self.pos[0] >= GOAL && self.pos[1] >= GOAL;
        EnvStep {
            s_next: self.state(),
            r: if at_goal { 1.0 } else { 0.0 },
            gamma: if at_goal { 0.0 } else { CONT_GAMMA },
            episode_end: at_goal,
        }
    }

    fn state(&self) -> Vec<f64> {
        self.pos.to_vec()
    }

    fn feature_map(&self) -> FeatureMap {
        standard_tiles(2, 2048)
    }
}
