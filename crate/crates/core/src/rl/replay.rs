//! Experience replay.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::sim::{Action, GraphState};

/// One transition. States are stored as graph snapshots referencing their
/// scenario's frozen RSRP matrix by index, which makes replay exact and cheap.
#[derive(Debug, Clone)]
pub struct Experience {
    pub scenario: usize,
    pub state: GraphState,
    pub action_index: usize,
    pub action: Action,
    pub reward: f64,
    pub next_state: GraphState,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with a seeded uniform sampler.
#[derive(Debug)]
pub struct ReplayBuffer {
    entries: Vec<Experience>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { entries: Vec::with_capacity(capacity.min(4096)), capacity, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, exp: Experience) {
        if self.entries.len() < self.capacity {
            self.entries.push(exp);
        } else {
            self.entries[self.cursor] = exp;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<&Experience> {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        (0..count)
            .map(|_| &self.entries[rng.random_range(0..self.entries.len())])
            .collect()
    }
}
