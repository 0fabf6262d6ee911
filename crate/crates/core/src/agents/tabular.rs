//! Table and count models over discrete state keys.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::sample_categorical;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TabularKind {
    /// Remember only the latest successor of each state-action.
    Deterministic,
    /// Count successors and sample in proportion.
    #[default]
    Counts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub next_key: usize,
    pub s_next: Vec<f64>,
    pub count: u64,
    pub reward_sum: f64,
    pub gamma: f64,
}

impl Edge {
    pub fn mean_reward(&self) -> f64 {
        self.reward_sum / self.count as f64
    }
}

/// A sampled model transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSample {
    pub next_key: usize,
    pub s_next: Vec<f64>,
    pub r: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct TabularModel {
    kind: TabularKind,
    forward: BTreeMap<(usize, usize), Vec<Edge>>,
    /// `key' → (key, a) → count`.
    reverse: BTreeMap<usize, BTreeMap<(usize, usize), u64>>,
    /// Last state seen for each key.
    states: BTreeMap<usize, Vec<f64>>,
}

impl TabularModel {
    pub fn new(kind: TabularKind) -> Self {
        Self {
            kind,
            forward: BTreeMap::new(),
            reverse: BTreeMap::new(),
            states: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> TabularKind {
        self.kind
    }

    #[allow(clippy::too_many_arguments)]
    pub fn update(&mut self, key: usize, s: &[f64], a: usize, next_key: usize, s_next: &[f64], r: f64, gamma: f64) {
        self.states.insert(key, s.to_vec());
        self.states.insert(next_key, s_next.to_vec());
        let edges = self.forward.entry((key, a)).or_default();
        match self.kind {
            TabularKind::Deterministic => {
                if let Some(old) = edges.first() {
                    let old_key = old.next_key;
                    if let Some(m) = self.reverse.get_mut(&old_key) {
                        m.remove(&(key, a));
                        if m.is_empty() {
                            self.reverse.remove(&old_key);
                        }
                    }
                }
                *edges = vec![Edge {
                    next_key,
                    s_next: s_next.to_vec(),
                    count: 1,
                    reward_sum: r,
                    gamma,
                }];
                self.reverse.entry(next_key).or_default().insert((key, a), 1);
            }
            TabularKind::Counts => {
                match edges.iter_mut().find(|e| e.next_key == next_key) {
                    Some(e) => {
                        e.count += 1;
                        e.reward_sum += r;
                        e.gamma = gamma;
                        e.s_next = s_next.to_vec();
                    }
                    None => edges.push(Edge {
                        next_key,
                        s_next: s_next.to_vec(),
                        count: 1,
                        reward_sum: r,
                        gamma,
                    }),
                }
                *self.reverse.entry(next_key).or_default().entry((key, a)).or_insert(0) += 1;
            }
        }
    }

    pub fn successors(&self, key: usize, a: usize) -> &[Edge] {
        self.forward.get(&(key, a)).map_or(&[], Vec::as_slice)
    }

    /// Draw a successor; `None` for an unmodelled state-action.
    pub fn sample<R: Rng + ?Sized>(&self, key: usize, a: usize, rng: &mut R) -> Option<TabularSample> {
        let edges = self.forward.get(&(key, a))?;
        let e = match edges.len() {
            0 => return None,
            1 => &edges[0],
            _ => {
                let w: Vec<f64> = edges.iter().map(|e| e.count as f64).collect();
                &edges[sample_categorical(&w, rng)]
            }
        };
        Some(TabularSample {
            next_key: e.next_key,
            s_next: e.s_next.clone(),
            r: e.mean_reward(),
            gamma: e.gamma,
        })
    }

    /// Every observed `(key, a)` leading into `next_key`, in key order.
    pub fn predecessors(&self, next_key: usize) -> Vec<(usize, usize)> {
        self.reverse
            .get(&next_key)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default()
    }

    /// Actions with at least one observed transition into `next_key`.
    pub fn predecessor_actions(&self, next_key: usize) -> Vec<usize> {
        let mut acts: Vec<usize> = self.predecessors(next_key).into_iter().map(|(_, a)| a).collect();
        acts.sort_unstable();
        acts.dedup();
        acts
    }

    /// Draw a predecessor key of `next_key` under `a`, weighted by counts.
    pub fn sample_predecessor<R: Rng + ?Sized>(&self, next_key: usize, a: usize, rng: &mut R) -> Option<usize> {
        let m = self.reverse.get(&next_key)?;
        let cands: Vec<(usize, f64)> = m
            .iter()
            .filter(|((_, pa), _)| *pa == a)
            .map(|((k, _), c)| (*k, *c as f64))
            .collect();
        if cands.is_empty() {
            return None;
        }
        let w: Vec<f64> = cands.iter().map(|c| c.1).collect();
        Some(cands[sample_categorical(&w, rng)].0)
    }

    pub fn state_of(&self, key: usize) -> Option<&[f64]> {
        self.states.get(&key).map(Vec::as_slice)
    }
}
