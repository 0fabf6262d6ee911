//! Fixed-capacity circular buffer with per-slot priorities.
//!
//! New items overwrite the oldest one. Sampling leaves items in place; the
//! caller writes back a fresh priority through the returned [`Slot`]. A slot
//! handle carries the insertion stamp of its occupant, so a write-back that
//! arrives after the slot was overwritten is ignored.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BufferError {
    #[error("buffer is empty")]
    EmptyBuffer,
}

/// Binary sum tree over a fixed number of leaves. Internal nodes are always
/// recomputed from their children, so the total never drifts from the sum
/// of leaves by more than one rounding per level.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut node = self.leaves + i;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf `i` such that the prefix sum before `i` is `≤ u` and the prefix
    /// sum through `i` exceeds `u`. Never returns a zero leaf while the total
    /// is positive.
    pub fn find(&self, mut u: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = self.nodes[2 * node];
            let right = self.nodes[2 * node + 1];
            if u < left || right <= 0.0 {
                node *= 2;
            } else {
                u -= left;
                node = 2 * node + 1;
            }
        }
        node - self.leaves
    }
}

/// Handle to a buffer slot as of a particular insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub index: usize,
    pub stamp: u64,
}

#[derive(Debug, Clone)]
pub struct PriorityBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    stamps: Vec<u64>,
    tree: SumTree,
    cursor: usize,
    inserted: u64,
}

impl<T> PriorityBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            stamps: Vec::with_capacity(capacity),
            tree: SumTree::new(capacity),
            cursor: 0,
            inserted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    pub fn total_priority(&self) -> f64 {
        self.tree.total()
    }

    /// Insert at the write cursor, overwriting the oldest item when full.
    /// Panics unless `priority` is finite and positive.
    pub fn insert(&mut self, item: T, priority: f64) -> Slot {
        check_priority(priority);
        let index = self.cursor;
        let stamp = self.inserted;
        if index == self.items.len() {
            self.items.push(item);
            self.stamps.push(stamp);
        } else {
            self.items[index] = item;
            self.stamps[index] = stamp;
        }
        self.tree.set(index, priority);
        self.inserted += 1;
        self.cursor = (self.cursor + 1) % self.capacity;
        Slot { index, stamp }
    }

    /// Proportional draw: slot `i` with probability `p_i / Σ p`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Slot, &T), BufferError> {
        if self.items.is_empty() {
            return Err(BufferError::EmptyBuffer);
        }
        let u = rng.random::<f64>() * self.tree.total();
        let index = self.tree.find(u).min(self.items.len() - 1);
        Ok((self.slot(index), &self.items[index]))
    }

    /// Uniform draw over occupied slots.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Slot, &T), BufferError> {
        if self.items.is_empty() {
            return Err(BufferError::EmptyBuffer);
        }
        let index = rng.random_range(0..self.items.len());
        Ok((self.slot(index), &self.items[index]))
    }

    /// Replace the priority of the slot's occupant. Returns `false` (and does
    /// nothing) if the slot has been overwritten since the handle was issued.
    pub fn update_priority(&mut self, slot: Slot, priority: f64) -> bool {
        check_priority(priority);
        if !self.is_current(slot) {
            return false;
        }
        self.tree.set(slot.index, priority);
        true
    }

    pub fn is_current(&self, slot: Slot) -> bool {
        slot.index < self.items.len() && self.stamps[slot.index] == slot.stamp
    }

    pub fn priority(&self, index: usize) -> f64 {
        assert!(index < self.items.len(), "slot {index} is not occupied");
        self.tree.get(index)
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }

    fn slot(&self, index: usize) -> Slot {
        Slot {
            index,
            stamp: self.stamps[index],
        }
    }

    /// Items from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &T> {
        let start = if self.is_full() { self.cursor } else { 0 };
        let n = self.items.len();
        (0..n).map(move |k| &self.items[(start + k) % n])
    }
}

fn check_priority(p: f64) {
    assert!(p.is_finite() && p > 0.0, "priority must be finite and positive, got {p}");
}
