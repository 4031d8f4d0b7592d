use std::collections::VecDeque;

use crate::error::{AgentError, Result};

/// Window of the last `k` encoded observations, zero-padded before the
/// episode start and flattened oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStack {
    k: usize,
    width: usize,
    frames: VecDeque<Vec<f64>>,
    flat: Vec<f64>,
}

impl ObservationStack {
    pub fn new(k: usize, width: usize) -> Self {
        let frames = (0..k).map(|_| vec![0.0; width]).collect();
        ObservationStack { k, width, frames, flat: vec![0.0; k * width] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn frame_width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.k * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn reset(&mut self) {
        self.frames.iter_mut().for_each(|f| f.iter_mut().for_each(|x| *x = 0.0));
        self.flat.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Drops the oldest frame and appends `obs`.
    pub fn push(&mut self, obs: &[f64]) -> Result<&[f64]> {
        if obs.len() != self.width {
            return Err(AgentError::Width { expected: self.width, got: obs.len() });
        }
        let mut oldest = self.frames.pop_front().expect("k >= 1");
        oldest.copy_from_slice(obs);
        self.frames.push_back(oldest);
        for (i, f) in self.frames.iter().enumerate() {
            self.flat[i * self.width..(i + 1) * self.width].copy_from_slice(f);
        }
        Ok(&self.flat)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }
}
