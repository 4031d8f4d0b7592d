//! Conditional-independence claims about the final reward of an episode,
//! checked exactly on the joint distribution of final observation and final
//! reward under a policy.

use std::collections::BTreeMap;

use super::report::{CheckKind, CheckReport, Condition, Counterexample};
use crate::envs::{self, EnvName};
use crate::error::Result;
use crate::fpomdp::{enumerate_histories, quantize, FactoredPomdp, NodeId, Policy, PROB_TOL};

/// A claim about the reward received on the last step of a history, in
/// terms of factors of the last observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DbnClaim {
    /// The final reward is a function of these factors.
    Determined { by: Vec<usize> },
    /// The final reward is independent of `of` given `given`.
    Independent { of: usize, given: Vec<usize> },
}

impl DbnClaim {
    /// The claim checked for each environment, with its analysis horizon.
    pub fn default_for(name: EnvName) -> (DbnClaim, usize) {
        match name {
            EnvName::Diversion => (
                DbnClaim::Independent { of: envs::diversion::ROW, given: vec![envs::diversion::COL] },
                9,
            ),
            EnvName::Key2Door => (DbnClaim::Determined { by: vec![envs::key2door::LOCATION] }, 8),
            EnvName::FrozenTMaze => (DbnClaim::Determined { by: vec![envs::tmaze::LOCATION] }, 8),
            EnvName::WatchTime => (DbnClaim::Determined { by: vec![envs::watch_time::TIME] }, 11),
        }
    }

    pub fn describe(&self, env: &FactoredPomdp) -> String {
        let name = |v: &usize| env.variables()[*v].name.clone();
        match self {
            DbnClaim::Determined { by } => {
                format!("r determined by {}", by.iter().map(name).collect::<Vec<_>>().join(","))
            }
            DbnClaim::Independent { of, given } => format!(
                "r independent of {} given {}",
                name(of),
                given.iter().map(name).collect::<Vec<_>>().join(",")
            ),
        }
    }
}

/// Checks the environment's default claim at `horizon`.
pub fn dbn_consistency(env: &FactoredPomdp, policy: &dyn Policy, policy_label: &str, horizon: usize) -> Result<CheckReport> {
    let name = EnvName::of(env)?;
    let (claim, _) = DbnClaim::default_for(name);
    dbn_consistency_with(env, policy, policy_label, horizon, &claim)
}

/// Final histories are the terminal ones and those at the last enumerated
/// level; each contributes its reach probability times the conditional
/// probability of each final-reward value.
pub fn dbn_consistency_with(
    env: &FactoredPomdp,
    policy: &dyn Policy,
    policy_label: &str,
    horizon: usize,
    claim: &DbnClaim,
) -> Result<CheckReport> {
    let set = enumerate_histories(env, horizon, Some(policy))?;
    let mut report = CheckReport::new(CheckKind::Dbn, env, policy_label);
    report.notes.push(claim.describe(env));
    // (given values, of value) -> reward -> (mass, witness)
    type Cell = BTreeMap<i64, (f64, NodeId)>;
    let mut joint: BTreeMap<(Vec<u8>, Option<u8>), Cell> = BTreeMap::new();
    let (given, of) = match claim {
        DbnClaim::Determined { by } => (by.clone(), None),
        DbnClaim::Independent { of, given } => (given.clone(), Some(*of)),
    };
    let value = |id: NodeId, v: usize| set.node(id).obs.value(v).unwrap_or(u8::MAX);
    for (i, node) in set.nodes().iter().enumerate() {
        let id = NodeId(i as u32);
        if node.level == 0 || !(node.done || node.level + 1 == horizon) {
            continue;
        }
        let g: Vec<u8> = given.iter().map(|&v| value(id, v)).collect();
        let o = of.map(|v| value(id, v));
        let cell = joint.entry((g, o)).or_default();
        for &(r, p) in &node.arrival_rewards {
            let mass = node.reach_prob * p;
            if mass <= 0.0 {
                continue;
            }
            cell.entry(quantize(r)).or_insert((0.0, id)).0 += mass;
        }
    }
    let witness_pair = |a: NodeId, b: NodeId, detail: String| Counterexample {
        h: set.history(a),
        h2: set.history(b),
        action: None,
        condition: Condition::Dependence,
        detail,
    };
    match claim {
        DbnClaim::Determined { .. } => {
            for ((g, _), cell) in &joint {
                let mut it = cell.iter();
                if let (Some((r1, (_, a))), Some((r2, (_, b)))) = (it.next(), it.next()) {
                    let detail = format!("values {g:?} give rewards {} and {}", *r1 as f64 * 1e-9, *r2 as f64 * 1e-9);
                    return Ok(report.fail(witness_pair(*a, *b, detail)));
                }
            }
        }
        DbnClaim::Independent { .. } => {
            let mut by_given: BTreeMap<&Vec<u8>, Vec<(Option<u8>, &Cell)>> = BTreeMap::new();
            for ((g, o), cell) in &joint {
                by_given.entry(g).or_default().push((*o, cell));
            }
            for (g, cells) in by_given {
                let dists: Vec<(BTreeMap<i64, f64>, NodeId)> = cells
                    .iter()
                    .filter_map(|(_, cell)| {
                        let total: f64 = cell.values().map(|x| x.0).sum();
                        let w = cell.values().next()?.1;
                        (total > 0.0).then(|| (cell.iter().map(|(r, x)| (*r, x.0 / total)).collect(), w))
                    })
                    .collect();
                let Some((d0, w0)) = dists.first() else { continue };
                for (d, w) in &dists[1..] {
                    let keys: std::collections::BTreeSet<i64> = d0.keys().chain(d.keys()).copied().collect();
                    for r in keys {
                        let p0 = d0.get(&r).copied().unwrap_or(0.0);
                        let p1 = d.get(&r).copied().unwrap_or(0.0);
                        if (p0 - p1).abs() > PROB_TOL {
                            let detail = format!(
                                "given {g:?}: Pr(r={}) is {p0} vs {p1}",
                                r as f64 * 1e-9
                            );
                            return Ok(report.fail(witness_pair(*w0, *w, detail)));
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}
