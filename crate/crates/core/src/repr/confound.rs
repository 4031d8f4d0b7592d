//! Policy-confounding detection: compares a representation's on-policy
//! class statistics with the statistics of the same classes under
//! intervention, where a class stands for every physically realizable
//! history that projects to it.

use std::collections::BTreeMap;

use rustc_hash::FxHashMap;

use super::check::check_representation;
use super::report::{total_variation, CheckKind, CheckReport, Condition, Counterexample};
use super::search::minimal_on;
use super::table::Levels;
use super::{observed_vars, HistoryRepresentation};
use crate::error::{CoreError, Result};
use crate::fpomdp::{enumerate_histories, quantize, ActionId, FactoredPomdp, HistorySet, Policy, PROB_TOL};

/// Confounding check for `rep` under `policy`; `verdict` is true when the
/// representation is confounded. `rep` must be π-Markov.
pub fn detect_policy_confounding(
    env: &FactoredPomdp,
    rep: &HistoryRepresentation,
    policy: &dyn Policy,
    policy_label: &str,
    horizon: usize,
) -> Result<CheckReport> {
    let full = enumerate_histories(env, horizon, None)?;
    let on = enumerate_histories(env, horizon, Some(policy))?;
    detect_policy_confounding_on(env, &full, &on, rep, policy_label)
}

/// As [`detect_policy_confounding`], on sets enumerated by the caller.
pub fn detect_policy_confounding_on(
    env: &FactoredPomdp,
    full: &HistorySet,
    on: &HistorySet,
    rep: &HistoryRepresentation,
    policy_label: &str,
) -> Result<CheckReport> {
    if full.restricted || full.horizon != on.horizon {
        return Err(CoreError::Contract("intervention set must be unconstrained with the same horizon".into()));
    }
    let pre = check_representation(env, on, rep, policy_label)?;
    if !pre.verdict {
        return Err(CoreError::Precondition(format!(
            "representation is not pi-Markov under {policy_label}: {}",
            pre.to_line()
        )));
    }
    let horizon = on.horizon;
    let obs_vars = observed_vars(env);
    let lf = Levels::build(full, obs_vars.clone())?;
    let lo = Levels::build(on, obs_vars)?;
    let mut report = CheckReport::new(CheckKind::Confounding, env, policy_label);
    let masks: Vec<Vec<usize>> = (0..horizon)
        .map(|t| {
            let m = lf.mask_of(t, rep.keep_set(t)?)?;
            Ok((0..lf.width(t)).filter(|c| m & (1 << c) != 0).collect())
        })
        .collect::<Result<_>>()?;
    let key = |levels: &Levels, t: usize, p: usize| -> Vec<u8> {
        let row = levels.row(t, p);
        masks[t].iter().map(|&c| row[c]).collect()
    };
    let next_dist = |set: &HistorySet, levels: &Levels, t: usize, p: usize, a: usize| {
        let node = set.node(set.level(t)[p]);
        let mut d: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for (child, prob) in node.children_for(ActionId(a)) {
            *d.entry(key(levels, t + 1, levels.pos[child.index()] as usize)).or_insert(0.0) += prob;
        }
        d
    };
    let mut classes = 0usize;
    for t in 0..horizon {
        // First on-policy member of each class.
        let mut first: FxHashMap<Vec<u8>, usize> = FxHashMap::default();
        for p in 0..lo.len(t) {
            first.entry(key(&lo, t, p)).or_insert(p);
        }
        classes += first.len();
        let mut order: Vec<(usize, usize)> = Vec::new();
        for q in 0..lf.len(t) {
            if let Some(&p) = first.get(&key(&lf, t, q)) {
                order.push((p, q));
            }
        }
        for (p, q) in order {
            let hp = on.node(on.level(t)[p]);
            let hq = full.node(full.level(t)[q]);
            let mut found: Option<(Option<usize>, Condition, String)> = None;
            if hp.done != hq.done {
                found = Some((None, Condition::Terminal, format!("done {} vs {}", hp.done, hq.done)));
            } else if !hp.done {
                for a in 0..on.num_actions {
                    if hp.support & (1 << a) == 0 {
                        continue;
                    }
                    if quantize(hp.rewards[a]) != quantize(hq.rewards[a]) {
                        found = Some((
                            Some(a),
                            Condition::Reward,
                            format!("on-policy reward {} vs intervened {}", hp.rewards[a], hq.rewards[a]),
                        ));
                        break;
                    }
                    if t + 1 < horizon {
                        let dp = next_dist(on, &lo, t, p, a);
                        let dq = next_dist(full, &lf, t, q, a);
                        let tv = total_variation(&dp, &dq);
                        if tv > PROB_TOL {
                            found = Some((Some(a), Condition::Transition, format!("total variation {tv}")));
                            break;
                        }
                    }
                }
            }
            if let Some((a, condition, detail)) = found {
                let cx = Counterexample {
                    h: on.history(on.level(t)[p]),
                    h2: full.history(full.level(t)[q]),
                    action: a.map(ActionId),
                    condition,
                    detail,
                };
                report.verdict = true;
                report.counterexample = Some(cx);
                return Ok(report);
            }
        }
    }
    report.verdict = false;
    report.notes.push(format!("{classes} on-policy classes agree with their interventions"));
    Ok(report)
}

/// Every π-minimal representation that keeps a subset of some minimal
/// representation, strictly smaller at some level, must be confounded.
/// `verdict` is true when no violation is found.
pub fn verify_subset_confounding(
    env: &FactoredPomdp,
    policy: &dyn Policy,
    policy_label: &str,
    horizon: usize,
) -> Result<CheckReport> {
    let full = enumerate_histories(env, horizon, None)?;
    let on = enumerate_histories(env, horizon, Some(policy))?;
    let minimal = minimal_on(env, &full, super::DEFAULT_REP_CAP)?;
    let pi_minimal = minimal_on(env, &on, super::DEFAULT_REP_CAP)?;
    let mut report = CheckReport::new(CheckKind::SubsetConfounding, env, policy_label);
    let mut below = 0usize;
    for rep in pi_minimal.representations() {
        if !minimal.exists_superset_chain(rep, true)? {
            continue;
        }
        below += 1;
        let c = detect_policy_confounding_on(env, &full, &on, rep, policy_label)?;
        if !c.verdict {
            report.verdict = false;
            report.notes.push(format!("not confounded: {}", rep.describe(env)));
            return Ok(report);
        }
    }
    report.notes.push(format!(
        "{} pi-minimal representations, {below} strictly below a minimal one, all confounded{}",
        pi_minimal.count(),
        if pi_minimal.truncated() { " (enumeration capped)" } else { "" }
    ));
    if below == 0 {
        report.notes.push("vacuous: no pi-minimal representation is strictly smaller".into());
    }
    Ok(report)
}
