//! FIFO experience replay. Observations are stored sparsely because the
//! stacked encodings are almost all zeros.

use std::collections::VecDeque;

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseObs {
    width: usize,
    entries: Box<[(u32, f64)]>,
}

impl SparseObs {
    pub fn new(dense: &[f64]) -> Self {
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        SparseObs { width: dense.len(), entries }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Writes the dense vector into `out`, which must be `width` long.
    pub fn fill(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &(i, v) in self.entries.iter() {
            out[i as usize] = v;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.width];
        self.fill(&mut v);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: SparseObs,
    pub action: usize,
    pub reward: f64,
    pub next_obs: SparseObs,
    /// The next state is terminal (not merely the time limit).
    pub terminal: bool,
}

/// Bounded queue; inserting at capacity evicts the oldest transition.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
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

    /// Appends `t`, returning the evicted transition when full.
    pub fn push(&mut self, t: Transition) -> Option<Transition> {
        let evicted = if self.items.len() == self.capacity { self.items.pop_front() } else { None };
        self.items.push_back(t);
        evicted
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        (0..batch).map(|_| rng.gen_range(0..self.items.len())).collect()
    }
}
