use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rustc_hash::FxHasher;

use super::{ActionId, History, ObservationVector};

/// A history-dependent decision rule `π(· | h)`.
pub trait Policy: Send + Sync {
    fn num_actions(&self) -> usize;

    fn action_probs(&self, h: &History) -> Vec<f64>;

    /// Bitmask of actions with positive probability.
    fn support(&self, h: &History) -> u64 {
        self.action_probs(h)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .fold(0u64, |m, (a, _)| m | (1 << a))
    }
}

impl<P: Policy + ?Sized> Policy for Arc<P> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }

    fn action_probs(&self, h: &History) -> Vec<f64> {
        (**self).action_probs(h)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }

    fn action_probs(&self, h: &History) -> Vec<f64> {
        (**self).action_probs(h)
    }
}

fn one_hot(n: usize, a: ActionId) -> Vec<f64> {
    let mut p = vec![0.0; n];
    p[a.0] = 1.0;
    p
}

#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy {
    n: usize,
}

impl UniformPolicy {
    pub fn new(num_actions: usize) -> Self {
        UniformPolicy { n: num_actions }
    }
}

impl Policy for UniformPolicy {
    fn num_actions(&self) -> usize {
        self.n
    }

    fn action_probs(&self, _h: &History) -> Vec<f64> {
        vec![1.0 / self.n as f64; self.n]
    }
}

/// Explicit table with a fallback for histories not in the table.
pub struct TabularPolicy {
    table: HashMap<History, Vec<f64>>,
    fallback: Arc<dyn Policy>,
}

impl TabularPolicy {
    pub fn new(fallback: Arc<dyn Policy>) -> Self {
        TabularPolicy { table: HashMap::new(), fallback }
    }

    pub fn insert(&mut self, h: History, probs: Vec<f64>) {
        self.table.insert(h, probs);
    }
}

impl Policy for TabularPolicy {
    fn num_actions(&self) -> usize {
        self.fallback.num_actions()
    }

    fn action_probs(&self, h: &History) -> Vec<f64> {
        match self.table.get(h) {
            Some(p) => p.clone(),
            None => self.fallback.action_probs(h),
        }
    }
}

/// Open-loop plans selected by the first observation and indexed by the
/// step count. Past the end of a plan its last action repeats.
#[derive(Debug, Clone)]
pub struct PlanPolicy {
    n: usize,
    plans: Vec<(ObservationVector, Vec<ActionId>)>,
    default: Vec<ActionId>,
}

impl PlanPolicy {
    pub fn new(num_actions: usize, default: Vec<ActionId>) -> Self {
        assert!(!default.is_empty(), "a plan needs at least one action");
        PlanPolicy { n: num_actions, plans: Vec::new(), default }
    }

    pub fn repeat(num_actions: usize, a: ActionId) -> Self {
        PlanPolicy::new(num_actions, vec![a])
    }

    pub fn with_plan(mut self, first: ObservationVector, plan: Vec<ActionId>) -> Self {
        assert!(!plan.is_empty(), "a plan needs at least one action");
        self.plans.push((first, plan));
        self
    }

    pub fn plan_for(&self, first: &ObservationVector) -> &[ActionId] {
        self.plans
            .iter()
            .find(|(o, _)| o == first)
            .map(|(_, p)| p.as_slice())
            .unwrap_or(&self.default)
    }

    pub fn action(&self, h: &History) -> ActionId {
        let plan = self.plan_for(&h.observations[0]);
        let k = h.actions.len().min(plan.len() - 1);
        plan[k]
    }
}

impl Policy for PlanPolicy {
    fn num_actions(&self) -> usize {
        self.n
    }

    fn action_probs(&self, h: &History) -> Vec<f64> {
        one_hot(self.n, self.action(h))
    }
}

/// A full-support stochastic policy whose probabilities are a fixed
/// pseudo-random function of `(seed, history)`.
#[derive(Debug, Clone, Copy)]
pub struct RandomFullSupportPolicy {
    n: usize,
    seed: u64,
}

impl RandomFullSupportPolicy {
    pub fn new(num_actions: usize, seed: u64) -> Self {
        RandomFullSupportPolicy { n: num_actions, seed }
    }
}

impl Policy for RandomFullSupportPolicy {
    fn num_actions(&self) -> usize {
        self.n
    }

    fn action_probs(&self, h: &History) -> Vec<f64> {
        let mut hasher = FxHasher::default();
        self.seed.hash(&mut hasher);
        h.hash(&mut hasher);
        let base = hasher.finish();
        let w: Vec<f64> = (0..self.n as u64)
            .map(|a| {
                let mut x = base ^ (a.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                x ^= x >> 33;
                x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
                x ^= x >> 33;
                0.05 + (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

/// Deterministic policy taking the most probable action of `inner`, ties
/// to the lowest index.
pub struct GreedyRestriction<P> {
    inner: P,
}

impl<P: Policy> Policy for GreedyRestriction<P> {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn action_probs(&self, h: &History) -> Vec<f64> {
        let p = self.inner.action_probs(h);
        let mut best = 0;
        for (a, &x) in p.iter().enumerate() {
            if x > p[best] {
                best = a;
            }
        }
        one_hot(p.len(), ActionId(best))
    }
}

pub fn greedy_restriction<P: Policy>(inner: P) -> GreedyRestriction<P> {
    GreedyRestriction { inner }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(obs: &[u8], acts: &[usize]) -> History {
        History {
            observations: obs.iter().map(|&x| ObservationVector::new(vec![(0, x)])).collect(),
            actions: acts.iter().map(|&a| ActionId(a)).collect(),
        }
    }

    #[test]
    fn full_support_is_normalized_positive_and_stable() {
        let pi = RandomFullSupportPolicy::new(4, 3);
        let x = h(&[0, 1, 2], &[1, 3]);
        let p = pi.action_probs(&x);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
        assert_eq!(p, pi.action_probs(&x));
        assert_ne!(p, RandomFullSupportPolicy::new(4, 4).action_probs(&x));
    }

    #[test]
    fn greedy_support_within_inner_support() {
        let pi = RandomFullSupportPolicy::new(3, 11);
        let g = greedy_restriction(pi);
        for k in 0..20u8 {
            let x = h(&[k, k / 2], &[(k % 3) as usize]);
            let s = g.support(&x);
            assert_eq!(s.count_ones(), 1);
            assert_eq!(s & pi.support(&x), s);
        }
    }

    #[test]
    fn plan_selected_by_first_observation() {
        let pi = PlanPolicy::new(2, vec![ActionId(0)])
            .with_plan(ObservationVector::new(vec![(0, 1)]), vec![ActionId(1), ActionId(0)]);
        assert_eq!(pi.action(&h(&[1], &[])), ActionId(1));
        assert_eq!(pi.action(&h(&[1, 0], &[1])), ActionId(0));
        assert_eq!(pi.action(&h(&[1, 0, 0, 0], &[1, 0, 0])), ActionId(0));
        assert_eq!(pi.action(&h(&[2], &[])), ActionId(0));
    }
}
