//! Exhaustive search for minimal (π-minimal) representations.
//!
//! A representation is Markov exactly when, at every level `t`, its keep-set
//! separates every pair of histories that disagree on termination, on a
//! reward, or on the distribution over the classes the representation
//! induces at `t + 1`. Call such a keep-set a key for that level's target.
//! Dropping variables at `t + 1` only merges next-level classes, which can
//! only make the target at `t` easier, so a representation is minimal iff
//! each of its keep-sets is an inclusion-minimal key for the target induced
//! by the keep-set above it. The search walks levels from the last to the
//! first; at each level the minimal keys are the minimal hitting sets of the
//! column-difference masks of the conflicting pairs. Levels below share
//! work through a DAG keyed by the partition of the level above.

use std::collections::BTreeSet;

use rustc_hash::{FxHashMap, FxHashSet};

use super::table::{Levels, Targets};
use super::{observed_vars, HistVar, HistoryRepresentation};
use crate::error::{CoreError, Result};
use crate::fpomdp::{enumerate_histories, FactoredPomdp, HistorySet, Policy};

/// Representations materialized by [`MinimalSet::representations`].
pub const DEFAULT_REP_CAP: usize = 4096;
/// Pair comparisons allowed across one search.
const PAIR_BUDGET: u128 = 5_000_000_000;
/// Intermediate hitting-set families larger than this abort the search.
const TRANSVERSAL_CAP: usize = 200_000;
/// Widths up to this use a dense bitmap to deduplicate masks.
const DENSE_WIDTH: usize = 26;

struct DagNode {
    /// Minimal keys, each with the node it leads to on the level below.
    keys: Vec<(u64, Option<u32>)>,
}

/// All minimal representations of one history set, kept as a DAG of
/// per-level minimal keys.
pub struct MinimalSet {
    horizon: usize,
    restricted: bool,
    cols: Vec<Vec<HistVar>>,
    /// `dag[t]`, with `dag[horizon - 1]` holding the single root.
    dag: Vec<Vec<DagNode>>,
    /// Chains from each node down to level 0.
    counts: Vec<Vec<u128>>,
    reps: Vec<HistoryRepresentation>,
    truncated: bool,
}

/// Minimal representations over all histories with at most `horizon`
/// observations.
pub fn find_minimal_representations(env: &FactoredPomdp, horizon: usize) -> Result<MinimalSet> {
    let set = enumerate_histories(env, horizon, None)?;
    minimal_on(env, &set, DEFAULT_REP_CAP)
}

/// π-minimal representations over the histories the policy can produce.
pub fn find_pi_minimal(env: &FactoredPomdp, policy: &dyn Policy, horizon: usize) -> Result<MinimalSet> {
    let set = enumerate_histories(env, horizon, Some(policy))?;
    minimal_on(env, &set, DEFAULT_REP_CAP)
}

/// History variables, per level, that appear in no minimal representation.
pub fn superfluous_variables(env: &FactoredPomdp, horizon: usize) -> Result<Vec<BTreeSet<HistVar>>> {
    let m = find_minimal_representations(env, horizon)?;
    Ok((0..horizon).map(|t| m.superfluous_at(t)).collect())
}

/// Runs the search on an enumerated set, materializing at most `rep_cap`
/// representations.
pub fn minimal_on(env: &FactoredPomdp, set: &HistorySet, rep_cap: usize) -> Result<MinimalSet> {
    let horizon = set.horizon;
    if horizon == 0 {
        return Err(CoreError::Precondition("horizon must be at least 1".into()));
    }
    let levels = Levels::build(set, observed_vars(env))?;
    let mut budget = PAIR_BUDGET;
    let mut dag: Vec<Vec<DagNode>> = (0..horizon).map(|_| Vec::new()).collect();
    // Partitions of the level above, one per DAG node on the current level.
    let mut pending: Vec<Option<Vec<u32>>> = vec![None];
    for t in (0..horizon).rev() {
        let mut below: FxHashMap<Vec<u32>, u32> = FxHashMap::default();
        let mut below_parts: Vec<Option<Vec<u32>>> = Vec::new();
        for next in pending.iter() {
            let targets = Targets::build(set, &levels, t, next.as_deref());
            let keys = minimal_keys(&levels, t, &targets, &mut budget)?;
            let mut node = DagNode { keys: Vec::with_capacity(keys.len()) };
            for k in keys {
                let child = if t == 0 {
                    None
                } else {
                    let part = levels.partition(t, k);
                    let n = below.len() as u32;
                    let id = *below.entry(part.clone()).or_insert_with(|| {
                        below_parts.push(Some(part));
                        n
                    });
                    Some(id)
                };
                node.keys.push((k, child));
            }
            dag[t].push(node);
        }
        pending = below_parts;
    }
    let counts = chain_counts(&dag);
    let mut out = MinimalSet {
        horizon,
        restricted: set.restricted,
        cols: levels.cols.clone(),
        dag,
        counts,
        reps: Vec::new(),
        truncated: false,
    };
    out.prune_dead();
    out.materialize(rep_cap);
    Ok(out)
}

fn chain_counts(dag: &[Vec<DagNode>]) -> Vec<Vec<u128>> {
    let mut counts: Vec<Vec<u128>> = Vec::with_capacity(dag.len());
    for (t, nodes) in dag.iter().enumerate() {
        let c = nodes
            .iter()
            .map(|n| {
                n.keys
                    .iter()
                    .map(|(_, child)| match child {
                        None => 1u128,
                        Some(c) => counts[t - 1][*c as usize],
                    })
                    .fold(0u128, |a, b| a.saturating_add(b))
            })
            .collect();
        counts.push(c);
    }
    counts
}

/// Inclusion-minimal column sets separating every conflicting pair.
fn minimal_keys(levels: &Levels, t: usize, targets: &Targets, budget: &mut u128) -> Result<Vec<u64>> {
    let lists = targets.conflict_groups();
    let mut pairs: u128 = 0;
    for groups in &lists {
        let total: u128 = groups.iter().map(|g| g.len() as u128).sum();
        let sq: u128 = groups.iter().map(|g| (g.len() as u128).pow(2)).sum();
        pairs += (total * total - sq) / 2;
    }
    if pairs > *budget {
        return Err(CoreError::Precondition(format!(
            "minimal search needs more than {PAIR_BUDGET} history comparisons; lower the horizon"
        )));
    }
    *budget -= pairs;
    let width = levels.width(t);
    let mut masks = MaskSet::new(width);
    for groups in &lists {
        for (i, gi) in groups.iter().enumerate() {
            for gj in &groups[i + 1..] {
                for &p in gi {
                    for &q in gj {
                        masks.insert(levels.diff(t, p as usize, q as usize));
                    }
                }
            }
        }
    }
    let family = minimize(masks.into_vec());
    if family.first() == Some(&0) {
        // Two histories with identical rows conflict; no key exists.
        return Ok(Vec::new());
    }
    minimal_transversals(&family)
}

enum MaskSet {
    Dense(Vec<u64>),
    Sparse(FxHashSet<u64>),
}

impl MaskSet {
    fn new(width: usize) -> MaskSet {
        if width <= DENSE_WIDTH {
            MaskSet::Dense(vec![0u64; (1usize << width).div_ceil(64)])
        } else {
            MaskSet::Sparse(FxHashSet::default())
        }
    }

    #[inline]
    fn insert(&mut self, m: u64) {
        match self {
            MaskSet::Dense(bits) => bits[(m >> 6) as usize] |= 1 << (m & 63),
            MaskSet::Sparse(s) => {
                s.insert(m);
            }
        }
    }

    fn into_vec(self) -> Vec<u64> {
        match self {
            MaskSet::Dense(bits) => {
                let mut v = Vec::new();
                for (w, &word) in bits.iter().enumerate() {
                    let mut b = word;
                    while b != 0 {
                        v.push(((w as u64) << 6) | b.trailing_zeros() as u64);
                        b &= b - 1;
                    }
                }
                v
            }
            MaskSet::Sparse(s) => s.into_iter().collect(),
        }
    }
}

/// Inclusion-minimal members, sorted by size then value.
fn minimize(mut v: Vec<u64>) -> Vec<u64> {
    v.sort_unstable_by_key(|m| (m.count_ones(), *m));
    v.dedup();
    let mut kept: Vec<u64> = Vec::new();
    for m in v {
        if !kept.iter().any(|k| k & !m == 0) {
            kept.push(m);
        }
    }
    kept
}

/// Minimal hitting sets of an antichain, by Berge's incremental product.
fn minimal_transversals(family: &[u64]) -> Result<Vec<u64>> {
    let mut current: Vec<u64> = vec![0];
    for &s in family {
        let mut next = Vec::with_capacity(current.len());
        for &tau in &current {
            if tau & s != 0 {
                next.push(tau);
            } else {
                let mut bits = s;
                while bits != 0 {
                    next.push(tau | (bits & bits.wrapping_neg()));
                    bits &= bits - 1;
                }
            }
        }
        current = minimize(next);
        if current.len() > TRANSVERSAL_CAP {
            return Err(CoreError::Precondition(format!(
                "more than {TRANSVERSAL_CAP} candidate keys at one level; lower the horizon"
            )));
        }
    }
    Ok(current)
}

impl MinimalSet {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Whether the search ran over a policy-restricted set.
    pub fn restricted(&self) -> bool {
        self.restricted
    }

    /// Number of minimal representations (saturating).
    pub fn count(&self) -> u128 {
        self.counts[self.horizon - 1][0]
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Materialized representations in canonical order (smaller keys
    /// first, from the last level down).
    pub fn representations(&self) -> &[HistoryRepresentation] {
        &self.reps
    }

    /// True when more representations exist than were materialized.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// The distinct minimal keep-sets occurring at level `t`.
    pub fn keys_at(&self, t: usize) -> Vec<BTreeSet<HistVar>> {
        let mut masks: Vec<u64> = self.dag[t].iter().flat_map(|n| n.keys.iter().map(|k| k.0)).collect();
        masks.sort_unstable_by_key(|m| (m.count_ones(), *m));
        masks.dedup();
        masks.into_iter().map(|m| self.vars_of(t, m)).collect()
    }

    /// Union of the keep-sets of all minimal representations at level `t`.
    pub fn union_at(&self, t: usize) -> BTreeSet<HistVar> {
        let m = self.dag[t].iter().flat_map(|n| n.keys.iter()).fold(0u64, |a, k| a | k.0);
        self.vars_of(t, m)
    }

    /// Variables at level `t` outside every minimal representation.
    pub fn superfluous_at(&self, t: usize) -> BTreeSet<HistVar> {
        let used = self.union_at(t);
        self.cols[t].iter().filter(|v| !used.contains(v)).copied().collect()
    }

    /// Whether every minimal representation keeps `var` at level `t`.
    pub fn all_keys_contain(&self, t: usize, var: HistVar) -> bool {
        let Some(c) = self.cols[t].iter().position(|v| *v == var) else {
            return false;
        };
        self.dag[t].iter().all(|n| n.keys.iter().all(|k| k.0 & (1 << c) != 0))
    }

    /// Whether `rep` is one of the minimal representations.
    pub fn contains(&self, rep: &HistoryRepresentation) -> Result<bool> {
        let masks = self.masks_of(rep)?;
        let mut node = 0u32;
        for t in (0..self.horizon).rev() {
            match self.dag[t][node as usize].keys.iter().find(|k| k.0 == masks[t]) {
                None => return Ok(false),
                Some((_, Some(c))) => node = *c,
                Some((_, None)) => {}
            }
        }
        Ok(true)
    }

    /// Whether some minimal representation keeps a superset of `rep` at
    /// every level; with `strict`, a proper superset at some level.
    pub fn exists_superset_chain(&self, rep: &HistoryRepresentation, strict: bool) -> Result<bool> {
        self.exists_related(rep, strict, |key, r| r & !key == 0)
    }

    /// Whether some minimal representation keeps a subset of `rep` at
    /// every level; with `strict`, a proper subset at some level.
    pub fn exists_subset_chain(&self, rep: &HistoryRepresentation, strict: bool) -> Result<bool> {
        self.exists_related(rep, strict, |key, r| key & !r == 0)
    }

    fn exists_related(
        &self,
        rep: &HistoryRepresentation,
        strict: bool,
        rel: impl Fn(u64, u64) -> bool,
    ) -> Result<bool> {
        let masks = self.masks_of(rep)?;
        // (some related chain, some related chain that differs somewhere)
        let mut memo: Vec<Vec<(bool, bool)>> = Vec::with_capacity(self.horizon);
        for t in 0..self.horizon {
            let row = self.dag[t]
                .iter()
                .map(|n| {
                    let mut any = false;
                    let mut proper = false;
                    for &(k, child) in &n.keys {
                        if !rel(k, masks[t]) {
                            continue;
                        }
                        let (ca, cp) = match child {
                            None => (true, false),
                            Some(c) => memo[t - 1][c as usize],
                        };
                        any |= ca;
                        proper |= cp || (ca && k != masks[t]);
                    }
                    (any, proper)
                })
                .collect();
            memo.push(row);
        }
        let (any, proper) = memo[self.horizon - 1][0];
        Ok(if strict { proper } else { any })
    }

    fn masks_of(&self, rep: &HistoryRepresentation) -> Result<Vec<u64>> {
        if rep.len() < self.horizon {
            return Err(CoreError::UndefinedTimestep { t: rep.len(), len: rep.len() });
        }
        (0..self.horizon)
            .map(|t| {
                let mut m = 0u64;
                for v in rep.keep_set(t)? {
                    let c = self.cols[t].iter().position(|x| x == v).ok_or_else(|| {
                        CoreError::RepSpec(format!("{v:?} is not a history variable at timestep {t}"))
                    })?;
                    m |= 1 << c;
                }
                Ok(m)
            })
            .collect()
    }

    fn vars_of(&self, t: usize, m: u64) -> BTreeSet<HistVar> {
        self.cols[t].iter().enumerate().filter(|(c, _)| m & (1 << c) != 0).map(|(_, v)| *v).collect()
    }

    /// Drops keys whose subtree has no complete chain.
    fn prune_dead(&mut self) {
        for t in 1..self.horizon {
            let below = &self.counts[t - 1];
            for node in &mut self.dag[t] {
                node.keys.retain(|(_, c)| c.is_none_or(|c| below[c as usize] > 0));
            }
        }
    }

    fn materialize(&mut self, cap: usize) {
        let mut stack: Vec<u64> = Vec::with_capacity(self.horizon);
        let mut reps = Vec::new();
        let mut truncated = false;
        self.walk(self.horizon - 1, 0, &mut stack, &mut reps, cap, &mut truncated);
        self.reps = reps;
        self.truncated = truncated;
    }

    fn walk(
        &self,
        t: usize,
        node: u32,
        stack: &mut Vec<u64>,
        out: &mut Vec<HistoryRepresentation>,
        cap: usize,
        truncated: &mut bool,
    ) {
        for &(k, child) in &self.dag[t][node as usize].keys {
            if out.len() >= cap {
                *truncated = true;
                return;
            }
            stack.push(k);
            match child {
                None => {
                    let keep = (0..self.horizon)
                        .map(|s| self.vars_of(s, stack[self.horizon - 1 - s]))
                        .collect();
                    out.push(HistoryRepresentation { keep });
                }
                Some(c) => self.walk(t - 1, c, stack, out, cap, truncated),
            }
            stack.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{self, EnvName, EnvVariant};
    use crate::fpomdp::{ObservationVector, Outcome, StateVector, UniformPolicy};
    use crate::repr::is_markov;

    fn single_state() -> FactoredPomdp {
        FactoredPomdp::builder("one", "train")
            .variable("x", 1)
            .actions(&["a"])
            .initial(vec![(StateVector(vec![0]), 1.0)])
            .horizon(6)
            .build(
                |s, _| vec![Outcome { next: s.clone(), prob: 1.0, reward: 0.0 }],
                |s| ObservationVector::project(s, &[0]),
                |_| false,
            )
            .unwrap()
    }

    /// Brute force over every per-level keep-set assignment.
    fn brute_minimal(env: &FactoredPomdp, horizon: usize) -> BTreeSet<HistoryRepresentation> {
        let set = enumerate_histories(env, horizon, None).unwrap();
        let levels = Levels::build(&set, observed_vars(env)).unwrap();
        let widths: Vec<usize> = (0..horizon).map(|t| levels.width(t)).collect();
        let total: usize = widths.iter().sum();
        assert!(total <= 20);
        let mut markov = Vec::new();
        for bits in 0u64..(1 << total) {
            let mut off = 0;
            let keep: Vec<BTreeSet<HistVar>> = widths
                .iter()
                .enumerate()
                .map(|(t, &w)| {
                    let m = (bits >> off) & ((1 << w) - 1);
                    off += w;
                    levels.vars_of(t, m)
                })
                .collect();
            let rep = HistoryRepresentation::new(keep).unwrap();
            if is_markov(env, &rep, horizon).unwrap().verdict {
                markov.push(rep);
            }
        }
        markov
            .iter()
            .filter(|r| !markov.iter().any(|o| o != *r && o.is_subset_of(r)))
            .cloned()
            .collect()
    }

    #[test]
    fn transversals_of_small_families() {
        assert_eq!(minimal_transversals(&[]).unwrap(), vec![0]);
        assert_eq!(minimal_transversals(&[0b11]).unwrap(), vec![0b01, 0b10]);
        let mut t = minimal_transversals(&[0b011, 0b110]).unwrap();
        t.sort();
        assert_eq!(t, vec![0b010, 0b101]);
        assert_eq!(minimize(vec![0b111, 0b001, 0b011, 0b100]), vec![0b001, 0b100]);
    }

    #[test]
    fn single_state_empty_rep_is_the_only_minimal() {
        let env = single_state();
        let m = find_minimal_representations(&env, 4).unwrap();
        assert_eq!(m.count(), 1);
        assert_eq!(m.representations(), &[HistoryRepresentation::empty(4)]);
        for t in 0..4 {
            assert_eq!(m.superfluous_at(t).len(), 2 * t + 1);
        }
    }

    #[test]
    fn search_matches_brute_force_on_key2door() {
        let env = envs::key2door(EnvVariant::Train);
        let brute = brute_minimal(&env, 4);
        let m = find_minimal_representations(&env, 4).unwrap();
        let found: BTreeSet<_> = m.representations().iter().cloned().collect();
        assert!(!m.truncated());
        assert_eq!(found, brute);
        assert_eq!(m.count(), brute.len() as u128);
        for r in &brute {
            assert!(m.contains(r).unwrap());
        }
    }

    #[test]
    fn search_matches_brute_force_on_diversion() {
        let env = envs::diversion(EnvVariant::Eval);
        let brute = brute_minimal(&env, 3);
        let m = find_minimal_representations(&env, 3).unwrap();
        let found: BTreeSet<_> = m.representations().iter().cloned().collect();
        assert_eq!(found, brute);
    }

    #[test]
    fn every_found_rep_is_markov_and_locally_minimal() {
        let env = envs::key2door(EnvVariant::Eval);
        let m = find_minimal_representations(&env, 6).unwrap();
        assert!(m.count() > 0);
        for rep in m.representations().iter().take(40) {
            assert!(is_markov(&env, rep, 6).unwrap().verdict);
            for t in 0..6 {
                for v in rep.keep_set(t).unwrap() {
                    let mut keep = rep.keep_sets().to_vec();
                    keep[t].remove(v);
                    let smaller = HistoryRepresentation::new(keep).unwrap();
                    assert!(!is_markov(&env, &smaller, 6).unwrap().verdict);
                }
            }
        }
    }

    #[test]
    fn tmaze_minimal_reps_keep_the_signal() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let m = find_minimal_representations(&env, 8).unwrap();
        assert!(m.all_keys_contain(0, HistVar::obs(tmaze_signal(), 0)));
        assert!(!m.superfluous_at(7).contains(&HistVar::obs(tmaze_signal(), 0)));
        let loc = HistVar::obs(envs::tmaze::LOCATION, 7);
        assert!(m.union_at(7).contains(&loc));
    }

    fn tmaze_signal() -> usize {
        envs::tmaze::SIGNAL
    }

    #[test]
    fn tmaze_pi_minimal_is_strictly_below() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let pi = envs::scripted_optimal_policy(EnvName::FrozenTMaze, EnvVariant::Train).unwrap();
        let p = find_pi_minimal(&env, pi.as_ref(), 8).unwrap();
        assert!(p.restricted());
        let m = find_minimal_representations(&env, 8).unwrap();
        for rep in p.representations() {
            assert!(m.exists_superset_chain(rep, true).unwrap());
        }
        let loc = HistoryRepresentation::parse("t1+:x2", &env, 8).unwrap();
        assert!(p.exists_subset_chain(&loc, false).unwrap());
    }

    #[test]
    fn watch_time_clock_is_superfluous() {
        let env = envs::watch_time(EnvVariant::Train);
        let sup = superfluous_variables(&env, 6).unwrap();
        for (t, s) in sup.iter().enumerate() {
            assert!(s.contains(&HistVar::obs(envs::watch_time::TIME, t)), "t={t}");
        }
    }

    #[test]
    fn diversion_keeps_row_and_column() {
        let env = envs::diversion(EnvVariant::Eval);
        let m = find_minimal_representations(&env, 7).unwrap();
        let t = 6;
        let u = m.union_at(t);
        assert!(u.contains(&HistVar::obs(envs::diversion::ROW, t)));
        assert!(u.contains(&HistVar::obs(envs::diversion::COL, t)));
    }

    #[test]
    fn uniform_pi_minimal_equals_minimal() {
        for name in EnvName::ALL {
            let env = envs::build(name, EnvVariant::Train);
            let h = 4;
            let a = find_minimal_representations(&env, h).unwrap();
            let b = find_pi_minimal(&env, &UniformPolicy::new(env.num_actions()), h).unwrap();
            assert_eq!(a.count(), b.count(), "{name}");
            assert_eq!(a.representations(), b.representations(), "{name}");
        }
    }

    #[test]
    fn search_is_deterministic() {
        let env = envs::key2door(EnvVariant::Train);
        let a = find_minimal_representations(&env, 6).unwrap();
        let b = find_minimal_representations(&env, 6).unwrap();
        assert_eq!(a.representations(), b.representations());
    }
}
