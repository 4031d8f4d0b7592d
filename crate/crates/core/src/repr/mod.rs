//! History representations: per-timestep keep-sets over history variables,
//! and exhaustive checks of the Markov, minimality and confounding
//! properties over enumerated history sets.
//!
//! Timesteps are 0-based. A history with observations `o_0 .. o_t` sits at
//! level `t` and its variables are `o_k^i` for `k <= t` and `a_k` for
//! `k < t`.

mod check;
mod confound;
mod dbn;
mod lemma;
mod report;
mod search;
mod table;

pub use check::{check_representation, is_markov, is_pi_markov};
pub use confound::{detect_policy_confounding, detect_policy_confounding_on, verify_subset_confounding};
pub use dbn::{dbn_consistency, dbn_consistency_with, DbnClaim};
pub use lemma::verify_support_inclusion;
pub use report::{CheckKind, CheckReport, Condition, Counterexample};
pub use search::{
    find_minimal_representations, find_pi_minimal, minimal_on, superfluous_variables, MinimalSet,
    DEFAULT_REP_CAP,
};

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{CoreError, Result};
use crate::fpomdp::{FactoredPomdp, History};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    /// Observation factor, by state-variable index.
    Obs(usize),
    Action,
}

/// One history variable: an observed factor or the action at timestep `t`.
///
/// Ordered by timestep, with the observation factors of `t` before `a_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HistVar {
    pub t: usize,
    pub kind: VarKind,
}

impl HistVar {
    pub fn obs(var: usize, t: usize) -> HistVar {
        HistVar { t, kind: VarKind::Obs(var) }
    }

    pub fn action(t: usize) -> HistVar {
        HistVar { t, kind: VarKind::Action }
    }

    /// Whether the variable exists in histories at `level`.
    pub fn available_at(&self, level: usize) -> bool {
        match self.kind {
            VarKind::Obs(_) => self.t <= level,
            VarKind::Action => self.t < level,
        }
    }

    pub fn label(&self, env: &FactoredPomdp) -> String {
        match self.kind {
            VarKind::Obs(v) => format!("{}@{}", env.variables()[v].name, self.t),
            VarKind::Action => format!("a@{}", self.t),
        }
    }

    fn value(&self, h: &History) -> u8 {
        match self.kind {
            VarKind::Obs(v) => h.observations[self.t].value(v).unwrap_or(u8::MAX),
            VarKind::Action => h.actions[self.t].0 as u8,
        }
    }
}

/// Projected value of a history: the kept variables' values in canonical
/// order. Unobserved factors project to `u8::MAX`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbstractValue {
    pub level: usize,
    pub values: Vec<u8>,
}

/// A keep-set for each history level `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HistoryRepresentation {
    keep: Vec<BTreeSet<HistVar>>,
}

impl HistoryRepresentation {
    pub fn new(keep: Vec<BTreeSet<HistVar>>) -> Result<Self> {
        for (t, k) in keep.iter().enumerate() {
            if let Some(v) = k.iter().find(|v| !v.available_at(t)) {
                return Err(CoreError::RepSpec(format!("{v:?} does not exist at timestep {t}")));
            }
        }
        Ok(HistoryRepresentation { keep })
    }

    pub fn empty(len: usize) -> Self {
        HistoryRepresentation { keep: vec![BTreeSet::new(); len] }
    }

    /// Every observed factor and every action at every level.
    pub fn identity(env: &FactoredPomdp, len: usize) -> Self {
        let obs = observed_vars(env);
        let keep = (0..len)
            .map(|t| {
                let mut k = BTreeSet::new();
                for s in 0..=t {
                    k.extend(obs.iter().map(|&v| HistVar::obs(v, s)));
                    if s < t {
                        k.insert(HistVar::action(s));
                    }
                }
                k
            })
            .collect();
        HistoryRepresentation { keep }
    }

    /// Number of levels covered.
    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn keep_set(&self, t: usize) -> Result<&BTreeSet<HistVar>> {
        self.keep.get(t).ok_or(CoreError::UndefinedTimestep { t, len: self.keep.len() })
    }

    pub fn keep_sets(&self) -> &[BTreeSet<HistVar>] {
        &self.keep
    }

    /// Keep-sets are subsets of `other`'s at every level.
    pub fn is_subset_of(&self, other: &HistoryRepresentation) -> bool {
        self.keep.len() == other.keep.len()
            && self.keep.iter().zip(&other.keep).all(|(a, b)| a.is_subset(b))
    }

    pub fn project(&self, h: &History) -> Result<AbstractValue> {
        let t = h.t();
        let keep = self.keep_set(t)?;
        Ok(AbstractValue { level: t, values: keep.iter().map(|v| v.value(h)).collect() })
    }

    /// Parses a keep-set description.
    ///
    /// Clauses are separated by `;`. Each clause is `<scope>:<items>` where
    /// the scope is `*`, `t<k>`, `t<k>+` or `t<k>-<m>` and the items are a
    /// comma-separated list of
    ///
    /// * `x2`: factor `x2` at the current timestep,
    /// * `x2-1`: factor `x2` one step back,
    /// * `x1@0`: factor `x1` at absolute timestep 0,
    /// * `x2*`: factor `x2` at every timestep so far,
    /// * `a-1`, `a@3`, `a*`: the same for actions,
    /// * `all` or `none`.
    ///
    /// Items that refer to a timestep not yet present at a level are
    /// skipped at that level. Levels no clause covers keep nothing.
    pub fn parse(spec: &str, env: &FactoredPomdp, len: usize) -> Result<Self> {
        let mut keep = vec![BTreeSet::new(); len];
        let ident = HistoryRepresentation::identity(env, len);
        for clause in spec.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let (scope, items) = clause
                .split_once(':')
                .ok_or_else(|| CoreError::RepSpec(format!("clause `{clause}` lacks `:`")))?;
            let (lo, hi) = parse_scope(scope.trim(), len)?;
            for item in items.split(',').map(str::trim).filter(|i| !i.is_empty()) {
                let item = parse_item(item, env)?;
                for (t, k) in keep.iter_mut().enumerate().take(hi.min(len)).skip(lo) {
                    match item {
                        Item::All => k.extend(ident.keep[t].iter().copied()),
                        Item::None => {}
                        Item::Var(kind, when) => {
                            for s in when.times(t) {
                                let v = HistVar { t: s, kind };
                                if v.available_at(t) {
                                    k.insert(v);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(HistoryRepresentation { keep })
    }

    pub fn describe(&self, env: &FactoredPomdp) -> String {
        self.keep
            .iter()
            .enumerate()
            .map(|(t, k)| {
                let items: Vec<String> = k.iter().map(|v| v.label(env)).collect();
                format!("t{t}:{}", if items.is_empty() { "none".into() } else { items.join(",") })
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for HistoryRepresentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (t, k) in self.keep.iter().enumerate() {
            if t > 0 {
                write!(f, ";")?;
            }
            write!(f, "t{t}:")?;
            let items: Vec<String> = k
                .iter()
                .map(|v| match v.kind {
                    VarKind::Obs(i) => format!("f{i}@{}", v.t),
                    VarKind::Action => format!("a@{}", v.t),
                })
                .collect();
            write!(f, "{}", if items.is_empty() { "none".into() } else { items.join(",") })?;
        }
        Ok(())
    }
}

/// Factors that appear in some observation of a reachable state, sorted.
pub fn observed_vars(env: &FactoredPomdp) -> Vec<usize> {
    let mut vars = BTreeSet::new();
    for s in env.reachable_states() {
        vars.extend(env.observe(&s).visible.iter().map(|(v, _)| *v));
    }
    vars.into_iter().collect()
}

#[derive(Debug, Clone, Copy)]
enum When {
    Lag(usize),
    At(usize),
    Every,
}

impl When {
    fn times(self, t: usize) -> Vec<usize> {
        match self {
            When::Lag(l) => t.checked_sub(l).into_iter().collect(),
            When::At(s) => vec![s],
            When::Every => (0..=t).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Item {
    All,
    None,
    Var(VarKind, When),
}

fn parse_num(s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| CoreError::RepSpec(format!("bad {what} `{s}`")))
}

fn parse_scope(scope: &str, len: usize) -> Result<(usize, usize)> {
    if scope == "*" {
        return Ok((0, len));
    }
    let rest = scope
        .strip_prefix('t')
        .ok_or_else(|| CoreError::RepSpec(format!("scope `{scope}` must start with `t` or be `*`")))?;
    if let Some(k) = rest.strip_suffix('+') {
        return Ok((parse_num(k, "timestep")?, len));
    }
    if let Some((a, b)) = rest.split_once('-') {
        let (a, b) = (parse_num(a, "timestep")?, parse_num(b, "timestep")?);
        if b < a {
            return Err(CoreError::RepSpec(format!("empty scope `{scope}`")));
        }
        return Ok((a, b + 1));
    }
    let k = parse_num(rest, "timestep")?;
    Ok((k, k + 1))
}

fn parse_item(item: &str, env: &FactoredPomdp) -> Result<Item> {
    match item {
        "all" => return Ok(Item::All),
        "none" => return Ok(Item::None),
        _ => {}
    }
    let (name, when) = if let Some(n) = item.strip_suffix('*') {
        (n, When::Every)
    } else if let Some((n, at)) = item.split_once('@') {
        (n, When::At(parse_num(at, "timestep")?))
    } else if let Some((n, lag)) = item.split_once('-') {
        (n, When::Lag(parse_num(lag, "lag")?))
    } else {
        (item, When::Lag(0))
    };
    let kind = if name == "a" {
        if let When::Lag(0) = when {
            return Err(CoreError::RepSpec("`a` needs a lag, `@` or `*`".into()));
        }
        VarKind::Action
    } else {
        let v = env
            .variable_index(name)
            .ok_or_else(|| CoreError::RepSpec(format!("unknown variable `{name}`")))?;
        if !observed_vars(env).contains(&v) {
            return Err(CoreError::RepSpec(format!("variable `{name}` is never observed")));
        }
        VarKind::Obs(v)
    };
    Ok(Item::Var(kind, when))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{self, EnvVariant};
    use crate::fpomdp::{enumerate_histories, ObservationVector};

    #[test]
    fn parse_scopes_and_items() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let rep = HistoryRepresentation::parse("t1+:x2", &env, 4).unwrap();
        assert!(rep.keep_set(0).unwrap().is_empty());
        for t in 1..4 {
            let k: Vec<_> = rep.keep_set(t).unwrap().iter().copied().collect();
            assert_eq!(k, vec![HistVar::obs(1, t)]);
        }
        let rep = HistoryRepresentation::parse("*:x1@0,x2;t2-3:a-1,x2-1", &env, 5).unwrap();
        assert_eq!(rep.keep_set(0).unwrap().len(), 2);
        assert_eq!(rep.keep_set(1).unwrap().len(), 2);
        assert_eq!(rep.keep_set(2).unwrap().len(), 4);
        assert_eq!(rep.keep_set(4).unwrap().len(), 2);
        let all = HistoryRepresentation::parse("*:all", &env, 3).unwrap();
        assert_eq!(all, HistoryRepresentation::identity(&env, 3));
        assert_eq!(all.keep_set(2).unwrap().len(), 3 * 2 + 2);
        assert_eq!(HistoryRepresentation::parse("*:none", &env, 3).unwrap(), HistoryRepresentation::empty(3));
    }

    #[test]
    fn parse_errors() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        for bad in ["x2", "t:x2", "q1:x2", "*:z9", "*:y", "*:a", "t3-1:x2"] {
            assert!(HistoryRepresentation::parse(bad, &env, 3).is_err(), "{bad}");
        }
    }

    #[test]
    fn describe_round_trips() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let rep = HistoryRepresentation::parse("*:x1@0;t1+:x2,a-1", &env, 4).unwrap();
        let back = HistoryRepresentation::parse(&rep.describe(&env), &env, 4).unwrap();
        assert_eq!(rep, back);
    }

    #[test]
    fn projection_of_location_only() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let rep = HistoryRepresentation::parse("*:x2", &env, 3).unwrap();
        let set = enumerate_histories(&env, 3, None).unwrap();
        for h in set.histories() {
            let v = rep.project(&h).unwrap();
            assert_eq!(v.values, vec![h.last().value(1).unwrap()]);
        }
        let long = History {
            observations: vec![ObservationVector::new(vec![(0, 0), (1, 0)]); 4],
            actions: vec![crate::fpomdp::ActionId(0); 3],
        };
        assert_eq!(rep.project(&long).unwrap_err(), CoreError::UndefinedTimestep { t: 3, len: 3 });
    }

    #[test]
    fn empty_rep_collapses_levels() {
        let env = envs::key2door(EnvVariant::Train);
        let rep = HistoryRepresentation::empty(4);
        let set = enumerate_histories(&env, 4, None).unwrap();
        for t in 0..4 {
            let vals: BTreeSet<_> = set.level(t).iter().map(|&n| rep.project(&set.history(n)).unwrap()).collect();
            assert_eq!(vals.len(), 1);
        }
    }

    #[test]
    fn identity_projection_is_injective() {
        let env = envs::frozen_tmaze(EnvVariant::Eval);
        let rep = HistoryRepresentation::identity(&env, 4);
        let set = enumerate_histories(&env, 4, None).unwrap();
        let vals: BTreeSet<_> = set.histories().iter().map(|h| rep.project(h).unwrap()).collect();
        assert_eq!(vals.len(), set.len());
    }

    #[test]
    fn hidden_future_vars_rejected() {
        let k = vec![BTreeSet::from([HistVar::action(0)])];
        assert!(HistoryRepresentation::new(k).is_err());
    }
}
