//! Bounded FIFO experience replay.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::env::{Action, Observation, RewardVector};
use crate::prefs::PreferenceVector;

/// One transition. The reward stays a vector; it is scalarized with `prefs`
/// when training targets are built.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub obs: Observation,
    pub action: Action,
    pub reward: RewardVector,
    pub next_obs: Observation,
    pub prefs: PreferenceVector,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            buf: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    /// Appends, evicting the oldest experience when full.
    pub fn push(&mut self, e: Experience) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Index 0 is the oldest stored experience.
    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.buf.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.buf.iter()
    }

    /// `k` distinct indices drawn uniformly, or `None` if fewer than `k` are stored.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Option<Vec<usize>> {
        (self.buf.len() >= k).then(|| index::sample(rng, self.buf.len(), k).into_vec())
    }
}
