use std::collections::BTreeMap;
use std::fmt;

use super::belief::{belief_from_history, belief_update, initial_belief, Belief};
use super::policy::Policy;
use super::{quantize, ActionId, FactoredPomdp, ObservationVector};
use crate::error::{CoreError, Result};

pub const DEFAULT_HISTORY_CAP: usize = 10_000_000;

/// An action-observation sequence `o_0, a_0, o_1, ..., a_{t-1}, o_t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History {
    pub observations: Vec<ObservationVector>,
    pub actions: Vec<ActionId>,
}

impl History {
    pub fn initial(obs: ObservationVector) -> History {
        History { observations: vec![obs], actions: Vec::new() }
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Index of the last observation.
    pub fn t(&self) -> usize {
        self.observations.len() - 1
    }

    pub fn extended(&self, a: ActionId, o: ObservationVector) -> History {
        let mut h = self.clone();
        h.actions.push(a);
        h.observations.push(o);
        h
    }

    pub fn last(&self) -> &ObservationVector {
        self.observations.last().expect("history has an observation")
    }

    pub fn is_prefix_of(&self, other: &History) -> bool {
        self.len() <= other.len()
            && other.observations[..self.len()] == self.observations[..]
            && other.actions[..self.actions.len()] == self.actions[..]
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, o) in self.observations.iter().enumerate() {
            if i > 0 {
                write!(f, " a{} ", self.actions[i - 1].0)?;
            }
            let vals: Vec<String> = o.visible.iter().map(|(v, x)| format!("{v}={x}")).collect();
            write!(f, "[{}]", vals.join(","))?;
        }
        Ok(())
    }
}

/// `R_h(h, a)`: expected reward under the belief induced by `h`.
pub fn history_reward(env: &FactoredPomdp, h: &History, action: ActionId) -> Result<f64> {
    env.check_action(action)?;
    let b = belief_from_history(env, h)?;
    Ok(b.iter().map(|(s, p)| p * env.reward(s, action)).sum())
}

/// `Pr(o' | h, a)` for every reachable next observation, sorted.
pub fn history_transition(
    env: &FactoredPomdp,
    h: &History,
    action: ActionId,
) -> Result<Vec<(ObservationVector, f64)>> {
    env.check_action(action)?;
    let b = belief_from_history(env, h)?;
    if b.terminal_status(env)? {
        return Err(CoreError::Contract(format!("history {h} is terminal")));
    }
    let mut m: BTreeMap<ObservationVector, f64> = BTreeMap::new();
    for (s, p) in b.iter() {
        for (n, q) in env.transition(s, action) {
            *m.entry(env.observe(&n)).or_insert(0.0) += p * q;
        }
    }
    Ok(m.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One enumerated history, stored as a node of the history tree.
#[derive(Debug, Clone)]
pub struct HistoryNode {
    pub parent: Option<NodeId>,
    /// Action that led here from the parent.
    pub action: Option<ActionId>,
    pub obs: ObservationVector,
    /// Index of the last observation (0 at the root).
    pub level: usize,
    pub belief: Belief,
    /// Probability of this history under the enumeration policy (uniform
    /// when no policy was given).
    pub reach_prob: f64,
    /// Terminal belief or time limit reached: no actions are taken here.
    pub done: bool,
    /// `R_h(h, a)` for every action, including unsupported ones.
    pub rewards: Vec<f64>,
    /// Distribution of the reward received on the step into this node,
    /// conditioned on this history: `(reward, prob)` sorted by reward.
    pub arrival_rewards: Vec<(f64, f64)>,
    /// Bitmask of actions taken at this node (unconstrained sets: all
    /// actions at live nodes; never any at done nodes).
    pub support: u64,
    /// Expanded children: `(action, child, Pr(o' | h, a))`.
    pub children: Vec<(ActionId, NodeId, f64)>,
}

impl HistoryNode {
    pub fn supports(&self, a: ActionId) -> bool {
        self.support & (1u64 << a.0) != 0
    }

    pub fn children_for(&self, a: ActionId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.children.iter().filter(move |(b, _, _)| *b == a).map(|(_, n, p)| (*n, *p))
    }
}

/// The tree of histories reachable within `horizon` observations, either
/// under unconstrained actions (the set H) or restricted to a policy's
/// support (the set H^π).
#[derive(Debug, Clone)]
pub struct HistorySet {
    pub horizon: usize,
    pub num_actions: usize,
    pub restricted: bool,
    nodes: Vec<HistoryNode>,
    levels: Vec<Vec<NodeId>>,
}

impl HistorySet {
    pub fn node(&self, id: NodeId) -> &HistoryNode {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[HistoryNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn levels(&self) -> &[Vec<NodeId>] {
        &self.levels
    }

    pub fn level(&self, t: usize) -> &[NodeId] {
        &self.levels[t]
    }

    pub fn history(&self, id: NodeId) -> History {
        let mut obs = Vec::new();
        let mut acts = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            let n = self.node(c);
            obs.push(n.obs.clone());
            if let Some(a) = n.action {
                acts.push(a);
            }
            cur = n.parent;
        }
        obs.reverse();
        acts.reverse();
        History { observations: obs, actions: acts }
    }

    /// Observation at index `t` along the path to `id`.
    pub fn obs_at(&self, id: NodeId, t: usize) -> &ObservationVector {
        let mut cur = id;
        while self.node(cur).level > t {
            cur = self.node(cur).parent.expect("non-root has a parent");
        }
        &self.node(cur).obs
    }

    pub fn histories(&self) -> Vec<History> {
        (0..self.nodes.len()).map(|i| self.history(NodeId(i as u32))).collect()
    }

    pub fn find(&self, h: &History) -> Option<NodeId> {
        let mut cur = self.levels[0]
            .iter()
            .copied()
            .find(|&r| self.node(r).obs == h.observations[0])?;
        for (a, o) in h.actions.iter().zip(&h.observations[1..]) {
            cur = self
                .node(cur)
                .children
                .iter()
                .find(|(b, n, _)| b == a && self.node(*n).obs == *o)
                .map(|(_, n, _)| *n)?;
        }
        Some(cur)
    }

    pub fn contains(&self, h: &History) -> bool {
        self.find(h).is_some()
    }
}

/// Enumerates H (no policy) or H^π with the default cap.
pub fn enumerate_histories(
    env: &FactoredPomdp,
    horizon: usize,
    policy: Option<&dyn Policy>,
) -> Result<HistorySet> {
    enumerate_histories_capped(env, horizon, policy, DEFAULT_HISTORY_CAP)
}

/// Enumerates histories with at most `horizon` observations.
///
/// A node is `done` when its belief is terminal or when the environment's
/// own horizon has been used up. Actions are expanded at every live node
/// below the last level; last-level nodes record their action support but
/// have no children.
pub fn enumerate_histories_capped(
    env: &FactoredPomdp,
    horizon: usize,
    policy: Option<&dyn Policy>,
    cap: usize,
) -> Result<HistorySet> {
    if horizon == 0 {
        return Err(CoreError::Contract("history horizon must be at least 1".into()));
    }
    let na = env.num_actions();
    if na > 64 {
        return Err(CoreError::Contract("at most 64 actions are supported".into()));
    }
    let mut set = HistorySet {
        horizon,
        num_actions: na,
        restricted: policy.is_some(),
        nodes: Vec::new(),
        levels: vec![Vec::new(); horizon],
    };

    let mut first: BTreeMap<ObservationVector, f64> = BTreeMap::new();
    for (s, p) in env.initial() {
        *first.entry(env.observe(s)).or_insert(0.0) += p;
    }
    for (obs, p) in first {
        let belief = initial_belief(env, &obs)?;
        push_node(env, &mut set, None, None, obs, 0, belief, p, Vec::new(), cap)?;
    }

    for t in 0..horizon {
        let last = t + 1 == horizon;
        let frontier = set.levels[t].clone();
        for id in frontier {
            if set.node(id).done {
                continue;
            }
            let probs: Vec<f64> = match policy {
                Some(pi) => {
                    let h = set.history(id);
                    let p = pi.action_probs(&h);
                    if p.len() != na {
                        return Err(CoreError::Contract(format!(
                            "policy returned {} probabilities for {na} actions",
                            p.len()
                        )));
                    }
                    let mass: f64 = p.iter().sum();
                    if (mass - 1.0).abs() > 1e-9 || p.iter().any(|x| *x < 0.0) {
                        return Err(CoreError::Contract(format!(
                            "policy distribution at {h} sums to {mass}"
                        )));
                    }
                    p
                }
                None => vec![1.0 / na as f64; na],
            };
            let mut support = 0u64;
            for (a, &pa) in probs.iter().enumerate() {
                if pa <= 0.0 {
                    continue;
                }
                support |= 1 << a;
                if last {
                    continue;
                }
                let action = ActionId(a);
                let branches = expand(env, &set.node(id).belief, action);
                let reach = set.node(id).reach_prob * pa;
                for (obs, pobs, arrival) in branches {
                    let belief = belief_update(env, &set.node(id).belief, action, &obs)?;
                    let child = push_node(
                        env,
                        &mut set,
                        Some(id),
                        Some(action),
                        obs,
                        t + 1,
                        belief,
                        reach * pobs,
                        arrival,
                        cap,
                    )?;
                    set.nodes[id.index()].children.push((action, child, pobs));
                }
            }
            set.nodes[id.index()].support = support;
        }
    }
    Ok(set)
}

#[allow(clippy::too_many_arguments)]
fn push_node(
    env: &FactoredPomdp,
    set: &mut HistorySet,
    parent: Option<NodeId>,
    action: Option<ActionId>,
    obs: ObservationVector,
    level: usize,
    belief: Belief,
    reach_prob: f64,
    arrival_rewards: Vec<(f64, f64)>,
    cap: usize,
) -> Result<NodeId> {
    if set.nodes.len() >= cap {
        return Err(CoreError::StateSpaceTooLarge { cap });
    }
    let na = env.num_actions();
    let done = belief.terminal_status(env)? || level >= env.horizon();
    let rewards = (0..na)
        .map(|a| belief.iter().map(|(s, p)| p * env.reward(s, ActionId(a))).sum())
        .collect();
    let id = NodeId(set.nodes.len() as u32);
    set.nodes.push(HistoryNode {
        parent,
        action,
        obs,
        level,
        belief,
        reach_prob,
        done,
        rewards,
        arrival_rewards,
        support: 0,
        children: Vec::new(),
    });
    set.levels[level].push(id);
    Ok(id)
}

/// Next-observation branches of `(belief, action)` with the conditional
/// distribution of the realized reward on each branch.
fn expand(
    env: &FactoredPomdp,
    belief: &Belief,
    action: ActionId,
) -> Vec<(ObservationVector, f64, Vec<(f64, f64)>)> {
    let mut by_obs: BTreeMap<ObservationVector, (f64, BTreeMap<i64, (f64, f64)>)> = BTreeMap::new();
    for (s, p) in belief.iter() {
        for o in env.outcomes(s, action) {
            let w = p * o.prob;
            let entry = by_obs.entry(env.observe(&o.next)).or_insert((0.0, BTreeMap::new()));
            entry.0 += w;
            let r = entry.1.entry(quantize(o.reward)).or_insert((o.reward, 0.0));
            r.1 += w;
        }
    }
    by_obs
        .into_iter()
        .filter(|(_, (p, _))| *p > 0.0)
        .map(|(obs, (p, rewards))| {
            let dist = rewards.into_values().map(|(r, w)| (r, w / p)).collect();
            (obs, p, dist)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{self, EnvVariant};
    use crate::fpomdp::{Outcome, PlanPolicy, StateVector, UniformPolicy};
    use std::collections::HashSet;

    /// Independent count of unconstrained histories by depth-first search
    /// over (state, remaining observations), memoised on the state. The
    /// environment is fully observable and deterministic, so every action
    /// sequence gives one history.
    fn dfs_count(env: &FactoredPomdp, horizon: usize) -> usize {
        use std::collections::HashMap;
        fn go(
            env: &FactoredPomdp,
            s: &StateVector,
            t: usize,
            horizon: usize,
            memo: &mut HashMap<(StateVector, usize), usize>,
        ) -> usize {
            if let Some(&c) = memo.get(&(s.clone(), t)) {
                return c;
            }
            let mut c = 1;
            if t + 1 < horizon && t < env.horizon() && !env.is_terminal(s) {
                for a in 0..env.num_actions() {
                    let mut next: Vec<StateVector> =
                        (env.dynamics)(s, ActionId(a)).into_iter().map(|o| o.next).collect();
                    next.sort();
                    next.dedup();
                    for n in next {
                        c += go(env, &n, t + 1, horizon, memo);
                    }
                }
            }
            memo.insert((s.clone(), t), c);
            c
        }
        let mut memo = HashMap::new();
        env.initial().iter().map(|(s, _)| go(env, s, 0, horizon, &mut memo)).sum()
    }

    #[test]
    fn horizon_one_is_initial_observations() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let set = enumerate_histories(&env, 1, None).unwrap();
        assert_eq!(set.len(), 2);
        let distinct: HashSet<_> = set.histories().into_iter().collect();
        assert_eq!(distinct.len(), 2);
    }

    #[test]
    fn diversion_count_matches_dfs() {
        for variant in [EnvVariant::Train, EnvVariant::Eval] {
            let env = envs::diversion(variant);
            for horizon in 1..=8 {
                let set = enumerate_histories(&env, horizon, None).unwrap();
                assert_eq!(set.len(), dfs_count(&env, horizon), "horizon {horizon}");
            }
        }
    }

    #[test]
    fn tmaze_optimal_gives_two_paths() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let pi = envs::scripted_optimal_policy(envs::EnvName::FrozenTMaze, EnvVariant::Train).unwrap();
        let set = enumerate_histories(&env, 9, Some(pi.as_ref())).unwrap();
        let leaves: Vec<_> = set.nodes().iter().filter(|n| n.children.is_empty()).collect();
        assert_eq!(leaves.len(), 2);
        assert!(leaves.iter().all(|n| n.done && n.level == 8));
        let plans: HashSet<Vec<ActionId>> = set
            .level(8)
            .iter()
            .map(|&id| set.history(id).actions)
            .collect();
        assert_eq!(plans.len(), 2);
    }

    #[test]
    fn cap_is_enforced() {
        let env = envs::diversion(EnvVariant::Train);
        let r = enumerate_histories_capped(&env, 6, None, 100);
        assert_eq!(r.unwrap_err(), CoreError::StateSpaceTooLarge { cap: 100 });
    }

    #[test]
    fn transitions_sum_to_one_and_match_nodes() {
        let env = envs::wrap_random_override(&envs::key2door(EnvVariant::Train), 0.2).unwrap();
        let set = enumerate_histories(&env, 6, None).unwrap();
        for (i, n) in set.nodes().iter().enumerate() {
            if n.done || n.level + 1 == set.horizon {
                continue;
            }
            let h = set.history(NodeId(i as u32));
            for a in 0..env.num_actions() {
                let dist = history_transition(&env, &h, ActionId(a)).unwrap();
                let mass: f64 = dist.iter().map(|(_, p)| p).sum();
                assert!((mass - 1.0).abs() < 1e-9);
                let from_tree: Vec<f64> = n.children_for(ActionId(a)).map(|(_, p)| p).collect();
                assert_eq!(from_tree.len(), dist.len());
                let r = history_reward(&env, &h, ActionId(a)).unwrap();
                assert!((r - n.rewards[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn find_round_trips() {
        let env = envs::frozen_tmaze(EnvVariant::Eval);
        let set = enumerate_histories(&env, 4, None).unwrap();
        for (i, _) in set.nodes().iter().enumerate() {
            let h = set.history(NodeId(i as u32));
            assert_eq!(set.find(&h), Some(NodeId(i as u32)));
        }
    }

    /// Two-state toy with a noisy bit and reward equal to the hidden bit;
    /// the history reward is then the posterior computed by hand.
    #[test]
    fn noisy_history_reward_matches_joint_enumeration() {
        let env = FactoredPomdp::builder("toy", "train")
            .variable("h", 2)
            .variable("o", 2)
            .actions(&["a", "b"])
            .initial(vec![(StateVector(vec![0, 0]), 0.5), (StateVector(vec![1, 0]), 0.5)])
            .horizon(3)
            .build(
                |s, _| {
                    let h = s.get(0);
                    let p1 = if h == 1 { 0.9 } else { 0.2 };
                    vec![
                        Outcome { next: StateVector(vec![h, 1]), prob: p1, reward: h as f64 },
                        Outcome { next: StateVector(vec![h, 0]), prob: 1.0 - p1, reward: h as f64 },
                    ]
                },
                |s| ObservationVector::project(s, &[1]),
                |_| false,
            )
            .unwrap();
        let set = enumerate_histories(&env, 3, None).unwrap();
        for (i, n) in set.nodes().iter().enumerate() {
            let h = set.history(NodeId(i as u32));
            // joint weights of hidden h given the observation sequence
            let mut w = [0.0f64; 2];
            for hv in 0..2u8 {
                let mut p = 0.5;
                for o in &h.observations[1..] {
                    let p1 = if hv == 1 { 0.9 } else { 0.2 };
                    p *= if o.value(1) == Some(1) { p1 } else { 1.0 - p1 };
                }
                w[hv as usize] = p;
            }
            let post1 = w[1] / (w[0] + w[1]);
            assert!((n.belief.marginal(0, 1) - post1).abs() < 1e-9);
            let r = history_reward(&env, &h, ActionId(0)).unwrap();
            assert!((r - post1).abs() < 1e-9);
        }
    }

    #[test]
    fn restricted_subset_of_unrestricted() {
        let env = envs::key2door(EnvVariant::Train);
        let all = enumerate_histories(&env, 8, None).unwrap();
        let pi = PlanPolicy::repeat(2, ActionId(1));
        let sub = enumerate_histories(&env, 8, Some(&pi)).unwrap();
        assert_eq!(sub.len(), 8);
        for h in sub.histories() {
            assert!(all.contains(&h));
        }
        let uni = enumerate_histories(&env, 8, Some(&UniformPolicy::new(2))).unwrap();
        assert_eq!(uni.len(), all.len());
    }
}
