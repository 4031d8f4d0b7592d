use std::collections::{BTreeMap, HashMap};

use super::belief::{initial_belief, Belief};
use super::policy::Policy;
use super::{quantize, ActionId, FactoredPomdp, History, ObservationVector, StateVector};
use crate::error::{CoreError, Result};

type BeliefKey = (usize, Vec<(StateVector, i64)>);

fn key(b: &Belief, t: usize) -> BeliefKey {
    (t, b.iter().map(|(s, p)| (s.clone(), quantize(p))).collect())
}

/// Expected immediate reward and next-observation branches of `(b, a)`.
fn branches(env: &FactoredPomdp, b: &Belief, a: ActionId) -> (f64, Vec<(f64, Belief)>) {
    let mut reward = 0.0;
    let mut by_obs: BTreeMap<ObservationVector, BTreeMap<StateVector, f64>> = BTreeMap::new();
    for (s, p) in b.iter() {
        for o in env.outcomes(s, a) {
            reward += p * o.prob * o.reward;
            *by_obs
                .entry(env.observe(&o.next))
                .or_default()
                .entry(o.next)
                .or_insert(0.0) += p * o.prob;
        }
    }
    let next = by_obs
        .into_values()
        .map(|m| {
            let mass: f64 = m.values().sum();
            (mass, Belief(m.into_iter().map(|(s, p)| (s, p / mass)).collect()))
        })
        .collect();
    (reward, next)
}

fn first_beliefs(env: &FactoredPomdp) -> Result<Vec<(f64, ObservationVector, Belief)>> {
    let mut first: BTreeMap<ObservationVector, f64> = BTreeMap::new();
    for (s, p) in env.initial() {
        *first.entry(env.observe(s)).or_insert(0.0) += p;
    }
    first
        .into_iter()
        .map(|(o, p)| Ok((p, o.clone(), initial_belief(env, &o)?)))
        .collect()
}

/// Exact undiscounted optimal expected return over the environment's
/// horizon, by expectimax over beliefs.
pub fn optimal_return(env: &FactoredPomdp) -> Result<f64> {
    fn value(
        env: &FactoredPomdp,
        b: &Belief,
        t: usize,
        memo: &mut HashMap<BeliefKey, f64>,
    ) -> Result<f64> {
        if t >= env.horizon() || b.terminal_status(env)? {
            return Ok(0.0);
        }
        let k = key(b, t);
        if let Some(&v) = memo.get(&k) {
            return Ok(v);
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..env.num_actions() {
            let (r, next) = branches(env, b, ActionId(a));
            let mut q = r;
            for (p, nb) in next {
                q += p * value(env, &nb, t + 1, memo)?;
            }
            best = best.max(q);
        }
        memo.insert(k, best);
        Ok(best)
    }
    let mut memo = HashMap::new();
    let mut total = 0.0;
    for (p, _, b) in first_beliefs(env)? {
        total += p * value(env, &b, 0, &mut memo)?;
    }
    Ok(total)
}

/// Exact undiscounted expected return of `policy`, by expanding the full
/// history tree. Errors once more than `cap` histories have been visited.
pub fn policy_return(env: &FactoredPomdp, policy: &dyn Policy, cap: usize) -> Result<f64> {
    fn go(
        env: &FactoredPomdp,
        policy: &dyn Policy,
        h: &History,
        b: &Belief,
        visited: &mut usize,
        cap: usize,
    ) -> Result<f64> {
        *visited += 1;
        if *visited > cap {
            return Err(CoreError::StateSpaceTooLarge { cap });
        }
        if h.actions.len() >= env.horizon() || b.terminal_status(env)? {
            return Ok(0.0);
        }
        let probs = policy.action_probs(h);
        let mut v = 0.0;
        for (a, &pa) in probs.iter().enumerate() {
            if pa <= 0.0 {
                continue;
            }
            let (r, next) = branches(env, b, ActionId(a));
            let mut q = r;
            for (p, nb) in next {
                let o = env.observe(nb.support().next().expect("non-empty belief"));
                q += p * go(env, policy, &h.extended(ActionId(a), o), &nb, visited, cap)?;
            }
            v += pa * q;
        }
        Ok(v)
    }
    let mut visited = 0;
    let mut total = 0.0;
    for (p, o, b) in first_beliefs(env)? {
        total += p * go(env, policy, &History::initial(o), &b, &mut visited, cap)?;
    }
    Ok(total)
}
