use std::path::Path;

use rand::{Rng, RngCore};
use thiserror::Error;

use super::{EnvStep, Environment};
use crate::features::FeatureMap;

pub const GOAL_REWARD: f64 = 100.0;
pub const GRID_GAMMA: f64 = 0.95;
const INTENDED: f64 = 0.925;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("layout is empty")]
    Empty,
    #[error("row {0} has a different width")]
    Ragged(usize),
    #[error("unexpected character {0:?}")]
    BadChar(char),
    #[error("layout needs exactly one {0}")]
    Marker(char),
    #[error("grid size {0} is too small")]
    TooSmall(usize),
    #[error("cannot read layout {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Grid of open and blocked cells with a start and a goal. Row 0 is the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub blocked: Vec<bool>,
    pub start: usize,
    pub goal: usize,
}

impl GridLayout {
    /// Parse rows of `.`, `#`, `S`, `G`. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, LayoutError> {
        let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let width = rows.first().ok_or(LayoutError::Empty)?.chars().count();
        let mut blocked = Vec::new();
        let mut start = None;
        let mut goal = None;
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(LayoutError::Ragged(r));
            }
            for ch in row.chars() {
                let idx = blocked.len();
                match ch {
                    '.' => blocked.push(false),
                    '#' => blocked.push(true),
                    'S' if start.is_none() => {
                        start = Some(idx);
                        blocked.push(false);
                    }
                    'G' if goal.is_none() => {
                        goal = Some(idx);
                        blocked.push(false);
                    }
                    'S' => return Err(LayoutError::Marker('S')),
                    'G' => return Err(LayoutError::Marker('G')),
                    c => return Err(LayoutError::BadChar(c)),
                }
            }
        }
        Ok(Self {
            width,
            height: rows.len(),
            blocked,
            start: start.ok_or(LayoutError::Marker('S'))?,
            goal: goal.ok_or(LayoutError::Marker('G'))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LayoutError> {
        let text = std::fs::read_to_string(path).map_err(|source| LayoutError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Square grid with a wall down the middle column and a single door in
    /// the second row; start bottom-left, goal top-right.
    pub fn square(size: usize) -> Result<Self, LayoutError> {
        if size < 4 {
            return Err(LayoutError::TooSmall(size));
        }
        let mut text = String::new();
        let wall = size / 2;
        for r in 0..size {
            for c in 0..size {
                let ch = if r == size - 1 && c == 0 {
                    'S'
                } else if r == 0 && c == size - 1 {
                    'G'
                } else if c == wall && r != 1 {
                    '#'
                } else {
                    '.'
                };
                text.push(ch);
            }
            text.push('\n');
        }
        Self::parse(&text)
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    /// Cell reached by moving `a` (0 up, 1 down, 2 left, 3 right); blocked
    /// or off-grid moves stay put.
    pub fn neighbour(&self, cell: usize, a: usize) -> usize {
        let (r, c) = self.row_col(cell);
        let (nr, nc) = match a {
            0 if r > 0 => (r - 1, c),
            1 if r + 1 < self.height => (r + 1, c),
            2 if c > 0 => (r, c - 1),
            3 if c + 1 < self.width => (r, c + 1),
            0..=3 => return cell,
            _ => panic!("invalid action {a}"),
        };
        let next = nr * self.width + nc;
        if self.blocked[next] {
            cell
        } else {
            next
        }
    }
}

#[derive(Debug, Clone)]
pub struct TabularGridworld {
    layout: GridLayout,
    stochastic: bool,
    cell: usize,
}

impl TabularGridworld {
    pub fn new(layout: GridLayout, stochastic: bool) -> Self {
        let cell = layout.start;
        Self {
            layout,
            stochastic,
            cell,
        }
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    /// Direction actually taken: the intended one with probability 0.925,
    /// otherwise one of the other three uniformly.
    fn realised_action(&self, a: usize, rng: &mut dyn RngCore) -> usize {
        if !self.stochastic {
            return a;
        }
        let u: f64 = rng.random();
        if u < INTENDED {
            return a;
        }
        let k = (((u - INTENDED) / ((1.0 - INTENDED) / 3.0)) as usize).min(2);
        (0..4).filter(|&d| d != a).nth(k).unwrap()
    }
}

impl Environment for TabularGridworld {
    fn state_dim(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.cell = self.layout.start;
        self.state()
    }

    fn step(&mut self, a: usize, rng: &mut dyn RngCore) -> EnvStep {
        let dir = self.realised_action(a, rng);
        self.cell = self.layout.neighbour(self.cell, dir);
        let at_goal = self.cell == self.layout.goal;
        EnvStep {
            s_next: self.state(),
            r: if at_goal { GOAL_REWARD } else { 0.0 },
            gamma: if at_goal { 0.0 } else { GRID_GAMMA },
            episode_end: at_goal,
        }
    }

    fn state(&self) -> Vec<f64> {
        vec![self.cell as f64]
    }

    fn feature_map(&self) -> FeatureMap {
        FeatureMap::OneHot {
            size: self.layout.cells(),
        }
    }
}
