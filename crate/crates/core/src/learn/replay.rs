use alloc::vec::Vec;

use rand::Rng;

use super::LearnError;
use crate::env::Transition;

/// Fixed-capacity ring buffer; once full, each insertion overwrites the oldest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, LearnError> {
        if capacity == 0 {
            return Err(LearnError::Config("replay capacity must be positive"));
        }
        Ok(Self { capacity, items: Vec::new(), next: 0, inserted: 0 })
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

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Uniform sample without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>, LearnError> {
        if batch > self.items.len() {
            return Err(LearnError::BufferTooSmall { len: self.items.len(), batch });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch).into_iter().map(|i| &self.items[i]).collect())
    }
}
