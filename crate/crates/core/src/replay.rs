//! Fixed-capacity FIFO replay buffer with uniform, with-replacement sampling.

use std::collections::VecDeque;

use crate::env::Transition;
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    storage: VecDeque<Transition>,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be at least 1"));
        }
        Ok(ReplayBuffer {
            capacity,
            state_dim,
            action_dim,
            // grow lazily; a 1e6 buffer should not allocate up front
            storage: VecDeque::with_capacity(capacity.min(4096)),
            pushed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Total number of transitions ever pushed.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, tr: Transition) -> Result<()> {
        check_dim("transition state", self.state_dim, tr.state.len())?;
        check_dim("transition next_state", self.state_dim, tr.next_state.len())?;
        check_dim("transition action", self.action_dim, tr.action.len())?;
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(tr);
        self.pushed += 1;
        Ok(())
    }

    /// Index 0 is the oldest stored transition.
    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.storage.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    /// `m` i.i.d. uniform indices, then the corresponding transitions.
    pub fn sample_uniform<R: rand::Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self.sample_indices(m, rng)?.into_iter().map(|i| self.storage[i].clone()).collect())
    }

    pub fn sample_indices<R: rand::Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::invalid("cannot sample from an empty replay buffer"));
        }
        let n = self.storage.len();
        Ok((0..m).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn clear(&mut self) {
        self.storage.clear();
    }
}
