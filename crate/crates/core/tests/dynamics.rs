use std::collections::BTreeMap;
use std::path::PathBuf;

use confound_core::envs::{self, EnvName, EnvVariant};
use confound_core::fpomdp::{
    belief_from_history, dump_env, ActionId, Episode, FactoredPomdp, History, StateVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn dump_matches_golden_files() {
    for (name, variant) in [(EnvName::Key2Door, EnvVariant::Train), (EnvName::Diversion, EnvVariant::Eval)] {
        let env = envs::build(name, variant);
        let text = dump_env(&env);
        let path = golden(&format!("{}-{}.txt", name.as_str(), variant.as_str()));
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let want = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, want, "{}", path.display());
    }
}

#[test]
fn dump_lists_every_reachable_state() {
    for name in EnvName::ALL {
        let env = envs::build(name, EnvVariant::Train);
        let text = dump_env(&env);
        let n = env.reachable_states().len();
        assert_eq!(text.lines().filter(|l| l.starts_with("O ")).count(), n, "{name}");
    }
}

/// Sampled transitions of the override wrapper converge to the exact
/// branch probabilities.
#[test]
fn sampled_transitions_match_outcomes() {
    let base = envs::frozen_tmaze(EnvVariant::Eval);
    let env = envs::wrap_random_override(&base, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let states = env.reachable_states();
    let n = 20_000;
    for s in states.iter().filter(|s| !env.is_terminal(s)).take(6) {
        for a in 0..env.num_actions() {
            let a = ActionId(a);
            let mut counts: BTreeMap<StateVector, usize> = BTreeMap::new();
            for _ in 0..n {
                let out = env.step(s, 0, a, &mut rng).unwrap();
                *counts.entry(out.state).or_default() += 1;
            }
            for (next, p) in env.transition(s, a) {
                let f = *counts.get(&next).unwrap_or(&0) as f64 / n as f64;
                let sd = (p * (1.0 - p) / n as f64).sqrt();
                assert!((f - p).abs() < 5.0 * sd + 1e-3, "{s} {a:?} -> {next}: {f} vs {p}");
            }
        }
    }
}

/// Posterior over the current state by summing over every state path that
/// is consistent with the history.
fn brute_belief(env: &FactoredPomdp, h: &History) -> BTreeMap<StateVector, f64> {
    let mut paths: Vec<(StateVector, f64)> = env
        .initial()
        .iter()
        .filter(|(s, _)| env.observe(s) == h.observations[0])
        .cloned()
        .collect();
    for (i, &a) in h.actions.iter().enumerate() {
        let mut next = Vec::new();
        for (s, p) in &paths {
            for (s2, q) in env.transition(s, a) {
                if env.observe(&s2) == h.observations[i + 1] {
                    next.push((s2, p * q));
                }
            }
        }
        paths = next;
    }
    let z: f64 = paths.iter().map(|(_, p)| p).sum();
    let mut out = BTreeMap::new();
    for (s, p) in paths {
        *out.entry(s).or_insert(0.0) += p / z;
    }
    out
}

#[test]
fn belief_filter_matches_path_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in EnvName::ALL {
        let env = envs::wrap_random_override(&envs::build(name, EnvVariant::Train), 0.3).unwrap();
        for seed in 0..20 {
            let mut ep = Episode::new(env.clone(), seed);
            let (_, o) = ep.reset();
            let mut h = History::initial(o);
            for _ in 0..rng.gen_range(1..8) {
                let a = ActionId(rng.gen_range(0..env.num_actions()));
                let out = ep.step(a).unwrap();
                h = h.extended(a, out.observation);
                if out.terminal {
                    break;
                }
            }
            let b = belief_from_history(&env, &h).unwrap();
            let want = brute_belief(&env, &h);
            assert_eq!(b.len(), want.len(), "{name} {h}");
            for (s, p) in want {
                assert!((b.prob(&s) - p).abs() < 1e-9, "{name} {h} {s}");
            }
        }
    }
}
