use std::collections::BTreeMap;

use super::{ActionId, FactoredPomdp, ObservationVector, StateVector};
use crate::error::{CoreError, Result};
use crate::fpomdp::History;

/// Posterior over hidden states given a history.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(pub BTreeMap<StateVector, f64>);

impl Belief {
    pub fn point(s: StateVector) -> Belief {
        Belief(BTreeMap::from([(s, 1.0)]))
    }

    pub fn prob(&self, s: &StateVector) -> f64 {
        self.0.get(s).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = &StateVector> {
        self.0.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateVector, f64)> {
        self.0.iter().map(|(s, p)| (s, *p))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Probability that factor `var` takes `value`.
    pub fn marginal(&self, var: usize, value: u8) -> f64 {
        self.0.iter().filter(|(s, _)| s.get(var) == value).map(|(_, p)| p).sum()
    }

    /// True when every state in the support is terminal; errors when the
    /// support mixes terminal and live states.
    pub(crate) fn terminal_status(&self, env: &FactoredPomdp) -> Result<bool> {
        let mut flags = self.0.keys().map(|s| env.is_terminal(s));
        let first = flags.next().unwrap_or(false);
        if flags.any(|f| f != first) {
            return Err(CoreError::Contract(
                "terminal status is not determined by the observation".into(),
            ));
        }
        Ok(first)
    }

    fn normalized(mut map: BTreeMap<StateVector, f64>, what: impl FnOnce() -> String) -> Result<Belief> {
        map.retain(|_, p| *p > 0.0);
        let mass: f64 = map.values().sum();
        if mass <= 0.0 {
            return Err(CoreError::ImpossibleObservation(what()));
        }
        for p in map.values_mut() {
            *p /= mass;
        }
        Ok(Belief(map))
    }
}

pub fn initial_belief(env: &FactoredPomdp, obs: &ObservationVector) -> Result<Belief> {
    let map: BTreeMap<StateVector, f64> = env
        .initial()
        .iter()
        .filter(|(s, _)| env.observe(s) == *obs)
        .map(|(s, p)| (s.clone(), *p))
        .collect();
    Belief::normalized(map, || format!("initial observation {obs:?}"))
}

/// Bayes filter step: predict through `T(· | s, action)`, condition on `obs`.
pub fn belief_update(
    env: &FactoredPomdp,
    belief: &Belief,
    action: ActionId,
    obs: &ObservationVector,
) -> Result<Belief> {
    env.check_action(action)?;
    if belief.terminal_status(env)? {
        return Err(CoreError::Contract("belief update from a terminal belief".into()));
    }
    let mut map: BTreeMap<StateVector, f64> = BTreeMap::new();
    for (s, p) in belief.iter() {
        for (n, q) in env.transition(s, action) {
            if env.observe(&n) == *obs {
                *map.entry(n).or_insert(0.0) += p * q;
            }
        }
    }
    Belief::normalized(map, || format!("observation {obs:?} after action {}", action.0))
}

pub fn belief_from_history(env: &FactoredPomdp, h: &History) -> Result<Belief> {
    let mut b = initial_belief(env, &h.observations[0])?;
    for (a, o) in h.actions.iter().zip(&h.observations[1..]) {
        b = belief_update(env, &b, *a, o)?;
    }
    Ok(b)
}
