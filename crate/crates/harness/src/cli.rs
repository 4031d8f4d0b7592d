//! Command implementations shared by the binary and its tests.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use confound_core::envs::{self, EnvName, EnvVariant};
use confound_core::fpomdp::{dump_env, greedy_restriction, FactoredPomdp, Policy, RandomFullSupportPolicy, UniformPolicy};
use confound_core::repr::{
    dbn_consistency, detect_policy_confounding, find_minimal_representations, find_pi_minimal, is_markov,
    is_pi_markov, superfluous_variables, verify_subset_confounding, verify_support_inclusion, DbnClaim,
    HistoryRepresentation, MinimalSet,
};

use crate::error::{LabError, Result};

/// Policy from its command-line name: `uniform`, `optimal` (the scripted
/// optimal policy of the variant), `random:<seed>` (a random full-support
/// policy) or `greedy:<seed>` (the greedy restriction of that policy).
pub fn parse_policy(spec: &str, name: EnvName, variant: EnvVariant, na: usize) -> Result<Arc<dyn Policy>> {
    let seed = |s: &str| s.parse::<u64>().map_err(|_| LabError::Usage(format!("bad policy seed in `{spec}`")));
    if spec == "uniform" {
        return Ok(Arc::new(UniformPolicy::new(na)));
    }
    if spec == "optimal" {
        return Ok(envs::scripted_optimal_policy(name, variant)?);
    }
    if let Some(s) = spec.strip_prefix("random:") {
        return Ok(Arc::new(RandomFullSupportPolicy::new(na, seed(s)?)));
    }
    if let Some(s) = spec.strip_prefix("greedy:") {
        return Ok(Arc::new(greedy_restriction(RandomFullSupportPolicy::new(na, seed(s)?))));
    }
    Err(LabError::Usage(format!("unknown policy `{spec}` (uniform|optimal|random:<seed>|greedy:<seed>)")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Markov,
    PiMarkov,
    Confounding,
    SubsetConfounding,
    SupportInclusion,
    Dbn,
    Minimal,
    PiMinimal,
    Superfluous,
}

impl FromStr for Check {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "markov" => Check::Markov,
            "pi-markov" => Check::PiMarkov,
            "confounding" => Check::Confounding,
            "subset-confounding" => Check::SubsetConfounding,
            "support-inclusion" => Check::SupportInclusion,
            "dbn" => Check::Dbn,
            "minimal" => Check::Minimal,
            "pi-minimal" => Check::PiMinimal,
            "superfluous" => Check::Superfluous,
            other => return Err(LabError::Usage(format!("unknown check `{other}`"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CheckArgs {
    pub env: EnvName,
    pub variant: EnvVariant,
    pub check: Check,
    /// Representation spec; required by markov, pi-markov and confounding.
    pub rep: Option<String>,
    pub policy: String,
    /// Second policy of a support-inclusion pair.
    pub policy2: Option<String>,
    pub horizon: usize,
}

fn describe_set(env: &FactoredPomdp, m: &MinimalSet) -> String {
    let mut s = format!("{} representation(s){}\n", m.count(), if m.truncated() { " (listing truncated)" } else { "" });
    for rep in m.representations() {
        writeln!(s, "{}", rep.describe(env)).expect("string write");
    }
    s
}

/// Runs one representation check and renders its result.
pub fn check_representation(args: &CheckArgs) -> Result<String> {
    let env = envs::build(args.env, args.variant);
    let na = env.num_actions();
    let h = args.horizon;
    let pi = parse_policy(&args.policy, args.env, args.variant, na)?;
    let rep = || -> Result<HistoryRepresentation> {
        let spec = args.rep.as_deref().ok_or_else(|| LabError::Usage("this check needs --rep".into()))?;
        Ok(HistoryRepresentation::parse(spec, &env, h)?)
    };
    let report = match args.check {
        Check::Markov => is_markov(&env, &rep()?, h)?,
        Check::PiMarkov => is_pi_markov(&env, &rep()?, pi.as_ref(), &args.policy, h)?,
        Check::Confounding => detect_policy_confounding(&env, &rep()?, pi.as_ref(), &args.policy, h)?,
        Check::SubsetConfounding => verify_subset_confounding(&env, pi.as_ref(), &args.policy, h)?,
        Check::SupportInclusion => {
            let spec2 = args.policy2.as_deref().ok_or_else(|| LabError::Usage("support-inclusion needs --policy2".into()))?;
            let pi2 = parse_policy(spec2, args.env, args.variant, na)?;
            let label = format!("{}>{spec2}", args.policy);
            verify_support_inclusion(&env, pi.as_ref(), pi2.as_ref(), &label, h, true)?
        }
        Check::Dbn => {
            let (claim, _) = DbnClaim::default_for(args.env);
            let mut r = dbn_consistency(&env, pi.as_ref(), &args.policy, h)?;
            r.notes.insert(0, claim.describe(&env));
            r
        }
        Check::Minimal => return Ok(describe_set(&env, &find_minimal_representations(&env, h)?)),
        Check::PiMinimal => return Ok(describe_set(&env, &find_pi_minimal(&env, pi.as_ref(), h)?)),
        Check::Superfluous => {
            let mut s = String::new();
            for (t, vars) in superfluous_variables(&env, h)?.iter().enumerate() {
                let names: Vec<String> = vars.iter().map(|v| v.label(&env)).collect();
                writeln!(s, "t{t}: {}", names.join(",")).expect("string write");
            }
            return Ok(s);
        }
    };
    Ok(format!("{report}{}\n", report.to_line()))
}

/// Model dump of a variant followed by its grid.
pub fn dump(name: EnvName, variant: EnvVariant) -> String {
    let env = envs::build(name, variant);
    format!("{}\n{}", dump_env(&env), envs::grid_spec(name, variant).render())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(check: &str, rep: Option<&str>, policy: &str) -> CheckArgs {
        CheckArgs {
            env: EnvName::FrozenTMaze,
            variant: EnvVariant::Train,
            check: check.parse().unwrap(),
            rep: rep.map(String::from),
            policy: policy.into(),
            policy2: None,
            horizon: 8,
        }
    }

    #[test]
    fn location_rep_reports() {
        let out = check_representation(&args("markov", Some("t1+:x2"), "uniform")).unwrap();
        assert!(out.contains("verdict=false"), "{out}");
        let out = check_representation(&args("pi-markov", Some("t1+:x2"), "optimal")).unwrap();
        assert!(out.contains("verdict=true"), "{out}");
        let out = check_representation(&args("confounding", Some("t1+:x2"), "optimal")).unwrap();
        assert!(out.contains("confounded"), "{out}");
    }

    #[test]
    fn usage_errors() {
        assert!(check_representation(&args("markov", None, "uniform")).is_err());
        assert!(check_representation(&args("support-inclusion", None, "uniform")).is_err());
        assert!(parse_policy("sometimes", EnvName::Key2Door, EnvVariant::Train, 2).is_err());
        assert!("nope".parse::<Check>().is_err());
    }

    #[test]
    fn support_pair_and_dump() {
        let mut a = args("support-inclusion", None, "random:3");
        a.env = EnvName::Key2Door;
        a.policy2 = Some("greedy:3".into());
        a.horizon = 5;
        assert!(check_representation(&a).unwrap().contains("verdict=true"));
        let d = dump(EnvName::Key2Door, EnvVariant::Eval);
        assert!(d.contains("key2door"));
    }
}
