use rustc_hash::FxHashMap;

use super::report::{CheckKind, CheckReport, Condition, Counterexample};
use super::table::{node_at, Levels, Targets, NO_SIG};
use super::{observed_vars, HistoryRepresentation};
use crate::error::{CoreError, Result};
use crate::fpomdp::{enumerate_histories, FactoredPomdp, HistorySet, Policy};

/// Markov check over all histories with at most `horizon` observations and
/// every action.
pub fn is_markov(env: &FactoredPomdp, rep: &HistoryRepresentation, horizon: usize) -> Result<CheckReport> {
    let set = enumerate_histories(env, horizon, None)?;
    check_representation(env, &set, rep, "unconstrained")
}

/// π-Markov check over the histories the policy can produce and the actions
/// it can take.
pub fn is_pi_markov(
    env: &FactoredPomdp,
    rep: &HistoryRepresentation,
    policy: &dyn Policy,
    policy_label: &str,
    horizon: usize,
) -> Result<CheckReport> {
    let set = enumerate_histories(env, horizon, Some(policy))?;
    check_representation(env, &set, rep, policy_label)
}

/// Checks `rep` against an enumerated set. An unconstrained set gives the
/// Markov check, a policy-restricted set the π-Markov check.
///
/// Within each class every pair of histories must agree on termination and,
/// for every action both take, on the reward and on the distribution over
/// next-level classes. Transitions out of the last enumerated level are not
/// checked.
pub fn check_representation(
    env: &FactoredPomdp,
    set: &HistorySet,
    rep: &HistoryRepresentation,
    policy_label: &str,
) -> Result<CheckReport> {
    let kind = if set.restricted { CheckKind::PiMarkov } else { CheckKind::Markov };
    let mut report = CheckReport::new(kind, env, policy_label);
    if rep.len() < set.horizon {
        return Err(CoreError::UndefinedTimestep { t: rep.len(), len: rep.len() });
    }
    let levels = Levels::build(set, observed_vars(env))?;
    let parts: Vec<Vec<u32>> = (0..set.horizon)
        .map(|t| Ok(levels.partition(t, levels.mask_of(t, rep.keep_set(t)?)?)))
        .collect::<Result<_>>()?;
    for t in 0..set.horizon {
        let next = (t + 1 < set.horizon).then(|| parts[t + 1].as_slice());
        let targets = Targets::build(set, &levels, t, next);
        if let Some((p, q, a, cond)) = first_violation(&parts[t], &targets) {
            let h = set.history(node_at(set, t, p));
            let h2 = set.history(node_at(set, t, q));
            let detail = match (cond, a) {
                (Condition::Reward, Some(a)) => format!(
                    "rewards {} vs {}",
                    set.node(node_at(set, t, p)).rewards[a],
                    set.node(node_at(set, t, q)).rewards[a]
                ),
                _ => String::new(),
            };
            let cx = Counterexample { h, h2, action: a.map(crate::fpomdp::ActionId), condition: cond, detail };
            return Ok(report.fail(cx));
        }
    }
    report.notes.push(format!("{} histories checked", set.len()));
    Ok(report)
}

/// First pair of positions in one class that disagree.
pub(crate) fn first_violation(
    class: &[u32],
    targets: &Targets,
) -> Option<(usize, usize, Option<usize>, Condition)> {
    let na = targets.na;
    // class -> (first position, first done flag, per-action first supporter)
    let mut seen: FxHashMap<u32, (usize, Vec<usize>)> = FxHashMap::default();
    for (p, &c) in class.iter().enumerate() {
        let entry = seen.entry(c).or_insert_with(|| (p, vec![usize::MAX; na]));
        let first = entry.0;
        if targets.done[first] != targets.done[p] {
            return Some((first, p, None, Condition::Terminal));
        }
        for a in 0..na {
            let s = targets.sig(p, a);
            if s == NO_SIG {
                continue;
            }
            let q = entry.1[a];
            if q == usize::MAX {
                entry.1[a] = p;
                continue;
            }
            if targets.sig(q, a) != s {
                let cond = if targets.reward[q * na + a] != targets.reward[p * na + a] {
                    Condition::Reward
                } else {
                    Condition::Transition
                };
                return Some((q, p, Some(a), cond));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{self, EnvName, EnvVariant};
    use crate::fpomdp::{ActionId, ObservationVector, Outcome, StateVector, UniformPolicy};

    #[test]
    fn identity_is_markov_everywhere() {
        for name in EnvName::ALL {
            let env = envs::build(name, EnvVariant::Train);
            let rep = HistoryRepresentation::identity(&env, 5);
            assert!(is_markov(&env, &rep, 5).unwrap().verdict, "{name}");
        }
    }

    #[test]
    fn single_state_env_any_rep_is_markov() {
        let env = FactoredPomdp::builder("one", "train")
            .variable("x", 1)
            .actions(&["a", "b"])
            .initial(vec![(StateVector(vec![0]), 1.0)])
            .horizon(5)
            .build(
                |s, a| vec![Outcome { next: s.clone(), prob: 1.0, reward: a.0 as f64 }],
                |s| ObservationVector::project(s, &[0]),
                |_| false,
            )
            .unwrap();
        for spec in ["*:none", "*:x", "*:all", "t2+:a-1"] {
            let rep = HistoryRepresentation::parse(spec, &env, 5).unwrap();
            assert!(is_markov(&env, &rep, 5).unwrap().verdict, "{spec}");
        }
    }

    #[test]
    fn tmaze_location_only_fails_with_signal_pair() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let rep = HistoryRepresentation::parse("t1+:x2", &env, 8).unwrap();
        let report = is_markov(&env, &rep, 8).unwrap();
        assert!(!report.verdict);
        let cx = report.counterexample.clone().unwrap();
        assert_eq!(cx.condition, Condition::Reward);
        assert_eq!(cx.action, Some(ActionId(3)));
        assert_ne!(cx.h.observations[0], cx.h2.observations[0]);
        assert_eq!(cx.h.last(), cx.h2.last());
        assert!(cx.recheck(&env, &rep).unwrap());
        let pi = envs::scripted_optimal_policy(EnvName::FrozenTMaze, EnvVariant::Train).unwrap();
        assert!(is_pi_markov(&env, &rep, pi.as_ref(), "optimal", 8).unwrap().verdict);
        let rep9 = HistoryRepresentation::parse("t1+:x2", &env, 9).unwrap();
        assert!(is_pi_markov(&env, &rep9, pi.as_ref(), "optimal", 9).unwrap().verdict);
    }

    #[test]
    fn uniform_policy_matches_unconstrained() {
        let env = envs::key2door(EnvVariant::Train);
        for spec in ["*:x", "*:x*", "*:none", "t1+:a-1,x"] {
            let rep = HistoryRepresentation::parse(spec, &env, 8).unwrap();
            let a = is_markov(&env, &rep, 8).unwrap();
            let b = is_pi_markov(&env, &rep, &UniformPolicy::new(2), "uniform", 8).unwrap();
            assert_eq!(a.verdict, b.verdict, "{spec}");
            assert_eq!(a.counterexample, b.counterexample, "{spec}");
        }
    }

    #[test]
    fn watch_time_clock_rep() {
        let env = envs::watch_time(EnvVariant::Train);
        let rep = HistoryRepresentation::parse("*:t", &env, 11).unwrap();
        let pi = envs::scripted_optimal_policy(EnvName::WatchTime, EnvVariant::Train).unwrap();
        assert!(is_pi_markov(&env, &rep, pi.as_ref(), "optimal", 11).unwrap().verdict);
        let rep6 = HistoryRepresentation::parse("*:t", &env, 6).unwrap();
        let r = is_pi_markov(&env, &rep6, &UniformPolicy::new(4), "uniform", 6).unwrap();
        assert!(!r.verdict);
        assert!(r.counterexample.unwrap().recheck(&env, &rep6).unwrap());
    }

    #[test]
    fn rep_shorter_than_horizon_is_an_error() {
        let env = envs::key2door(EnvVariant::Train);
        let rep = HistoryRepresentation::empty(3);
        assert!(is_markov(&env, &rep, 4).is_err());
    }
}
