use std::collections::BTreeMap;
use std::fmt;

use super::{AbstractValue, HistoryRepresentation};
use crate::error::Result;
use crate::fpomdp::{history_reward, history_transition, ActionId, FactoredPomdp, History, PROB_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Markov,
    PiMarkov,
    Confounding,
    SubsetConfounding,
    SupportInclusion,
    Dbn,
}

impl CheckKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::Markov => "markov",
            CheckKind::PiMarkov => "pi-markov",
            CheckKind::Confounding => "confounding",
            CheckKind::SubsetConfounding => "subset-confounding",
            CheckKind::SupportInclusion => "support-inclusion",
            CheckKind::Dbn => "dbn",
        }
    }
}

/// Which condition separates the two histories of a counterexample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Reward,
    Transition,
    Terminal,
    /// A history of one set missing from another.
    Membership,
    /// A conditional distribution that should not depend on a variable.
    Dependence,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Reward => "reward",
            Condition::Transition => "transition",
            Condition::Terminal => "terminal",
            Condition::Membership => "membership",
            Condition::Dependence => "dependence",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub h: History,
    /// Second history; for membership failures this equals `h`.
    pub h2: History,
    pub action: Option<ActionId>,
    pub condition: Condition,
    pub detail: String,
}

impl Counterexample {
    /// Re-derives the failure from the belief-level history functions,
    /// independently of the enumeration tables. Returns `true` when the two
    /// histories do project together and differ in the stated condition.
    pub fn recheck(&self, env: &FactoredPomdp, rep: &HistoryRepresentation) -> Result<bool> {
        if rep.project(&self.h)? != rep.project(&self.h2)? {
            return Ok(false);
        }
        match (self.condition, self.action) {
            (Condition::Reward, Some(a)) => {
                let r1 = history_reward(env, &self.h, a)?;
                let r2 = history_reward(env, &self.h2, a)?;
                Ok((r1 - r2).abs() > PROB_TOL)
            }
            (Condition::Transition, Some(a)) => {
                let d1 = next_class_dist(env, rep, &self.h, a)?;
                let d2 = next_class_dist(env, rep, &self.h2, a)?;
                Ok(total_variation(&d1, &d2) > PROB_TOL)
            }
            (Condition::Terminal, _) => {
                let b1 = crate::fpomdp::belief_from_history(env, &self.h)?;
                let b2 = crate::fpomdp::belief_from_history(env, &self.h2)?;
                Ok(b1.terminal_status(env)? != b2.terminal_status(env)?)
            }
            _ => Ok(false),
        }
    }
}

fn next_class_dist(
    env: &FactoredPomdp,
    rep: &HistoryRepresentation,
    h: &History,
    a: ActionId,
) -> Result<BTreeMap<AbstractValue, f64>> {
    let mut m = BTreeMap::new();
    for (o, p) in history_transition(env, h, a)? {
        *m.entry(rep.project(&h.extended(a, o))?).or_insert(0.0) += p;
    }
    Ok(m)
}

pub(crate) fn total_variation<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut tv = 0.0;
    for (k, p) in a {
        tv += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, q) in b {
        if !a.contains_key(k) {
            tv += q;
        }
    }
    tv / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub kind: CheckKind,
    pub env: String,
    pub policy: String,
    /// For Markov-style checks: the property holds. For confounding: the
    /// representation is confounded.
    pub verdict: bool,
    /// False when the check's precondition did not hold.
    pub applicable: bool,
    pub counterexample: Option<Counterexample>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(kind: CheckKind, env: &FactoredPomdp, policy: &str) -> Self {
        CheckReport {
            kind,
            env: format!("{}/{}", env.name(), env.variant()),
            policy: policy.to_string(),
            verdict: true,
            applicable: true,
            counterexample: None,
            notes: Vec::new(),
        }
    }

    pub(crate) fn fail(mut self, cx: Counterexample) -> Self {
        self.verdict = false;
        self.counterexample = Some(cx);
        self
    }

    /// One `key=value` line for golden tests and scripting.
    pub fn to_line(&self) -> String {
        let mut s = format!(
            "check={} env={} policy={} applicable={} verdict={}",
            self.kind.as_str(),
            self.env,
            self.policy,
            self.applicable,
            self.verdict
        );
        match &self.counterexample {
            None => s.push_str(" cx=none"),
            Some(cx) => {
                s.push_str(&format!(" cx={} t={}", cx.condition.as_str(), cx.h.t()));
                if let Some(a) = cx.action {
                    s.push_str(&format!(" action={}", a.0));
                }
                s.push_str(&format!(" h={} h2={}", compact(&cx.h), compact(&cx.h2)));
            }
        }
        s
    }
}

fn compact(h: &History) -> String {
    let mut s = String::new();
    for (i, o) in h.observations.iter().enumerate() {
        if i > 0 {
            s.push_str(&format!("/{}/", h.actions[i - 1].0));
        }
        let vals: Vec<String> = o.visible.iter().map(|(_, x)| x.to_string()).collect();
        s.push_str(&vals.join("."));
    }
    s
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match (self.kind, self.verdict) {
            (_, _) if !self.applicable => "not applicable",
            (CheckKind::Confounding, true) => "confounded",
            (CheckKind::Confounding, false) => "not confounded",
            (_, true) => "holds",
            (_, false) => "fails",
        };
        writeln!(f, "{} on {} under {}: {what}", self.kind.as_str(), self.env, self.policy)?;
        if let Some(cx) = &self.counterexample {
            writeln!(f, "  condition: {}", cx.condition.as_str())?;
            if let Some(a) = cx.action {
                writeln!(f, "  action: {}", a.0)?;
            }
            writeln!(f, "  h : {}", cx.h)?;
            writeln!(f, "  h': {}", cx.h2)?;
            if !cx.detail.is_empty() {
                writeln!(f, "  {}", cx.detail)?;
            }
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}
