use super::check::check_representation;
use super::report::{CheckKind, CheckReport, Condition, Counterexample};
use super::search::minimal_on;
use crate::error::Result;
use crate::fpomdp::{enumerate_histories, FactoredPomdp, HistorySet, NodeId, Policy};

/// Support-inclusion check for a policy pair. When `π2`'s support is
/// contained in `π1`'s on every history `π2` reaches (otherwise the report
/// is not applicable), asserts that `π2`'s history set is contained in
/// `π1`'s and, with `check_reps`, that every π1-minimal representation is
/// also π2-Markov.
pub fn verify_support_inclusion(
    env: &FactoredPomdp,
    pi1: &dyn Policy,
    pi2: &dyn Policy,
    label: &str,
    horizon: usize,
    check_reps: bool,
) -> Result<CheckReport> {
    let h1 = enumerate_histories(env, horizon, Some(pi1))?;
    let h2 = enumerate_histories(env, horizon, Some(pi2))?;
    let mut report = CheckReport::new(CheckKind::SupportInclusion, env, label);
    let (pairs, missing) = align(&h2, &h1);
    if let Some(&(n2, _)) = pairs.iter().find(|&&(n2, n1)| h2.node(n2).support & !h1.node(n1).support != 0) {
        report.applicable = false;
        report.notes.push(format!("second policy leaves the first's support at {}", h2.history(n2)));
        return Ok(report);
    }
    if let Some(&n2) = missing.first() {
        let h = h2.history(n2);
        let cx = Counterexample {
            h: h.clone(),
            h2: h,
            action: None,
            condition: Condition::Membership,
            detail: "history of the second set missing from the first".into(),
        };
        return Ok(report.fail(cx));
    }
    report.notes.push(format!("{} of {} histories shared", h2.len(), h1.len()));
    if check_reps {
        let minimal = minimal_on(env, &h1, super::DEFAULT_REP_CAP)?;
        for rep in minimal.representations() {
            let r = check_representation(env, &h2, rep, label)?;
            if !r.verdict {
                report.notes.push(format!("first-policy minimal {} is not Markov on the second", rep.describe(env)));
                report.verdict = false;
                report.counterexample = r.counterexample;
                return Ok(report);
            }
        }
        report.notes.push(format!("{} first-policy minimal representations stay Markov", minimal.representations().len()));
    }
    Ok(report)
}

/// Matches every node of `a` with the node of `b` holding the same
/// history, walking both trees together. Returns matched pairs and the
/// nodes of `a` with no counterpart.
fn align(a: &HistorySet, b: &HistorySet) -> (Vec<(NodeId, NodeId)>, Vec<NodeId>) {
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    let mut frontier: Vec<(NodeId, NodeId)> = Vec::new();
    for &ra in a.level(0) {
        match b.level(0).iter().find(|&&rb| b.node(rb).obs == a.node(ra).obs) {
            Some(&rb) => frontier.push((ra, rb)),
            None => missing.push(ra),
        }
    }
    while let Some((na, nb)) = frontier.pop() {
        pairs.push((na, nb));
        let cb = &b.node(nb).children;
        for &(act, ca, _) in &a.node(na).children {
            let obs = &a.node(ca).obs;
            match cb.iter().find(|(x, c, _)| *x == act && b.node(*c).obs == *obs) {
                Some(&(_, cbid, _)) => frontier.push((ca, cbid)),
                None => missing.push(ca),
            }
        }
    }
    pairs.sort();
    missing.sort();
    (pairs, missing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{self, EnvName, EnvVariant};
    use crate::fpomdp::{greedy_restriction, RandomFullSupportPolicy, UniformPolicy};

    #[test]
    fn equal_policies_share_every_history() {
        let env = envs::key2door(EnvVariant::Train);
        let u = UniformPolicy::new(2);
        let r = verify_support_inclusion(&env, &u, &u, "same", 6, true).unwrap();
        assert!(r.verdict && r.applicable);
    }

    #[test]
    fn tmaze_uniform_then_optimal() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let pi = envs::scripted_optimal_policy(EnvName::FrozenTMaze, EnvVariant::Train).unwrap();
        let u = UniformPolicy::new(4);
        let r = verify_support_inclusion(&env, &u, pi.as_ref(), "uniform>optimal", 8, true).unwrap();
        assert!(r.verdict && r.applicable, "{r}");
    }

    #[test]
    fn reversed_pair_is_not_applicable() {
        let env = envs::frozen_tmaze(EnvVariant::Train);
        let pi = envs::scripted_optimal_policy(EnvName::FrozenTMaze, EnvVariant::Train).unwrap();
        let u = UniformPolicy::new(4);
        let r = verify_support_inclusion(&env, pi.as_ref(), &u, "optimal>uniform", 4, false).unwrap();
        assert!(!r.applicable);
    }

    #[test]
    fn greedy_restrictions_stay_inside() {
        for name in EnvName::ALL {
            let env = envs::build(name, EnvVariant::Train);
            for seed in 0..3 {
                let p1 = RandomFullSupportPolicy::new(env.num_actions(), seed);
                let p2 = greedy_restriction(p1.clone());
                let r = verify_support_inclusion(&env, &p1, &p2, "pair", 5, true).unwrap();
                assert!(r.verdict && r.applicable, "{name}");
            }
        }
    }
}
