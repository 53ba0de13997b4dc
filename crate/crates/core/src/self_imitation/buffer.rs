use std::collections::VecDeque;

use rand::Rng;

use super::Branch;
use crate::error::{Error, Result};

/// Bounded FIFO of branches; the oldest entries are evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    entries: VecDeque<Branch>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Branch> {
        self.entries.iter()
    }

    pub fn push(&mut self, branches: impl IntoIterator<Item = Branch>) {
        for b in branches {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            if self.capacity > 0 {
                self.entries.push_back(b);
            }
        }
    }

    /// `n` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Branch>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..n)
            .map(|_| self.entries[rng.random_range(0..self.entries.len())].clone())
            .collect())
    }
}
