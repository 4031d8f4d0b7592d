//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The learning criteria train 10 seeds × 100K steps per condition; run
//! directories are cached under `$ACCEPTANCE_DIR` (default: the cargo
//! target tmpdir) and reused when their config matches, so only the first
//! invocation pays for training. `ACCEPTANCE_SEEDS=n` shrinks the seed
//! count for quick local runs. A criterion that is not met prints FAIL but
//! does not change the exit code; errors while evaluating one do.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use confound_agents::{evaluate, train_dqn, DqnAgent, DqnConfig, Encoder, StackedEnv};
use confound_core::envs::{self, tmaze, watch_time, EnvName, EnvVariant};
use confound_core::fpomdp::{
    belief_from_history, greedy_restriction, optimal_return, ActionId, FactoredPomdp, History, ObservationVector,
    Outcome, RandomFullSupportPolicy, StateVector, UniformPolicy,
};
use confound_core::repr::{
    dbn_consistency, detect_policy_confounding, find_minimal_representations, find_pi_minimal, is_markov,
    is_pi_markov, superfluous_variables, verify_support_inclusion, HistVar, HistoryRepresentation,
};
use confound_lab::probe::{kl_probe_path, Direction, ProbeGrid};
use confound_lab::records::curve;
use confound_lab::runner::checkpoint_path;
use confound_lab::{run_experiment, RunOutput, Setting};
use confound_nn::gradcheck;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

struct Suite {
    passed: usize,
    failed: usize,
    errors: usize,
}

impl Suite {
    fn run(&mut self, name: &str, limit_s: Option<f64>, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let res = f();
        let secs = start.elapsed().as_secs_f64();
        let timing = match limit_s {
            Some(l) => format!(" [{secs:.1}s, limit {l}s]"),
            None => format!(" [{secs:.1}s]"),
        };
        match res {
            Ok((ok, detail)) => {
                let ok = ok && limit_s.is_none_or(|l| secs < l);
                if ok {
                    self.passed += 1;
                } else {
                    self.failed += 1;
                }
                println!("{} {name}: {detail}{timing}", if ok { "PASS" } else { "FAIL" });
            }
            Err(e) => {
                self.errors += 1;
                println!("ERROR {name}: {e}{timing}");
            }
        }
    }
}

fn tmaze_train() -> FactoredPomdp {
    envs::frozen_tmaze(EnvVariant::Train)
}

fn location_rep_on_tmaze() -> Check {
    let env = tmaze_train();
    let pi = envs::scripted_optimal_policy(EnvName::FrozenTMaze, EnvVariant::Train).map_err(err)?;
    let rep = HistoryRepresentation::parse("t1+:x2", &env, 8).map_err(err)?;
    let pim = is_pi_markov(&env, &rep, pi.as_ref(), "optimal", 8).map_err(err)?.verdict;
    let m = is_markov(&env, &rep, 8).map_err(err)?;
    let cx_ok = match &m.counterexample {
        Some(cx) => cx.recheck(&env, &rep).map_err(err)?,
        None => false,
    };
    let conf = detect_policy_confounding(&env, &rep, pi.as_ref(), "optimal", 8).map_err(err)?.verdict;
    Ok((
        pim && !m.verdict && cx_ok && conf,
        format!("pi-markov={pim} markov={} counterexample-rechecks={cx_ok} confounded={conf}", m.verdict),
    ))
}

fn tmaze_minimal_vs_pi_minimal() -> Check {
    let env = tmaze_train();
    let h = 8;
    let pi = envs::scripted_optimal_policy(EnvName::FrozenTMaze, EnvVariant::Train).map_err(err)?;
    let m = find_minimal_representations(&env, h).map_err(err)?;
    let signal = HistVar::obs(tmaze::SIGNAL, 0);
    let keeps_signal = !m.is_empty() && m.all_keys_contain(0, signal);
    let p = find_pi_minimal(&env, pi.as_ref(), h).map_err(err)?;
    let mut strict = !p.is_empty();
    for rep in p.representations() {
        let below = m.exists_superset_chain(rep, true).map_err(err)?;
        let smaller_later = (1..h).any(|t| {
            let k = rep.keep_set(t).expect("level exists");
            let u = m.union_at(t);
            k.is_subset(&u) && k.len() < u.len()
        });
        strict &= below && smaller_later;
    }
    Ok((
        keeps_signal && strict,
        format!("{} minimal (all keep x1 at t0: {keeps_signal}); {} pi-minimal strictly below: {strict}", m.count(), p.count()),
    ))
}

fn watch_time_clock() -> Check {
    let env = envs::watch_time(EnvVariant::Train);
    let sup = superfluous_variables(&env, 6).map_err(err)?;
    let superfluous = sup.iter().enumerate().all(|(t, s)| s.contains(&HistVar::obs(watch_time::TIME, t)));
    let pi = envs::scripted_optimal_policy(EnvName::WatchTime, EnvVariant::Train).map_err(err)?;
    let rep = HistoryRepresentation::parse("*:t", &env, 11).map_err(err)?;
    let on_pi = is_pi_markov(&env, &rep, pi.as_ref(), "optimal", 11).map_err(err)?.verdict;
    let rep6 = HistoryRepresentation::parse("*:t", &env, 6).map_err(err)?;
    let on_uniform = is_pi_markov(&env, &rep6, &UniformPolicy::new(4), "uniform", 6).map_err(err)?.verdict;
    Ok((
        superfluous && on_pi && !on_uniform,
        format!("t superfluous at every level={superfluous} pi-markov(optimal)={on_pi} pi-markov(uniform)={on_uniform}"),
    ))
}

fn support_inclusion_pairs() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for name in EnvName::ALL {
        let env = envs::build(name, EnvVariant::Train);
        let na = env.num_actions();
        let mut held = 0;
        for seed in 0..100 {
            let p1 = RandomFullSupportPolicy::new(na, 7_000 + seed);
            let p2 = greedy_restriction(p1);
            let r = verify_support_inclusion(&env, &p1, &p2, "pair", 6, false).map_err(err)?;
            if r.applicable && r.verdict {
                held += 1;
            }
        }
        ok &= held == 100;
        details.push(format!("{name} {held}/100"));
    }
    Ok((ok, details.join(", ")))
}

fn dbn_checks() -> Check {
    let div = envs::diversion(EnvVariant::Eval);
    let pi = envs::scripted_optimal_policy(EnvName::Diversion, EnvVariant::Eval).map_err(err)?;
    let indep = dbn_consistency(&div, pi.as_ref(), "optimal", 9).map_err(err)?.verdict;
    let dep = !dbn_consistency(&div, &UniformPolicy::new(4), "uniform", 9).map_err(err)?.verdict;
    let k2d = envs::key2door(EnvVariant::Train);
    let kpi = envs::scripted_optimal_policy(EnvName::Key2Door, EnvVariant::Train).map_err(err)?;
    let by_loc = dbn_consistency(&k2d, kpi.as_ref(), "optimal", 8).map_err(err)?.verdict;
    Ok((
        indep && dep && by_loc,
        format!("diversion row-independent(optimal)={indep} row-dependent(uniform)={dep} key2door determined-by-location={by_loc}"),
    ))
}

/// Two hidden states with noisy transitions and a noisy observed bit.
fn noisy_env() -> FactoredPomdp {
    FactoredPomdp::builder("noisy", "train")
        .variable("h", 2)
        .variable("o", 2)
        .actions(&["a", "b"])
        .initial(vec![(StateVector(vec![0, 0]), 0.3), (StateVector(vec![1, 0]), 0.7)])
        .horizon(6)
        .build(
            |s, a| {
                let h = s.get(0);
                let stay = if a.0 == 0 { 0.8 } else { 0.4 };
                let mut out = Vec::new();
                for (nh, p) in [(h, stay), (1 - h, 1.0 - stay)] {
                    let one = if nh == 1 { 0.6 } else { 0.1 };
                    for (no, q) in [(1u8, one), (0u8, 1.0 - one)] {
                        out.push(Outcome { next: StateVector(vec![nh, no]), prob: p * q, reward: 0.0 });
                    }
                }
                out
            },
            |s| ObservationVector::project(s, &[1]),
            |_| false,
        )
        .expect("noisy env is well formed")
}

/// Posterior over the last state by summing the probability of every state
/// path consistent with the history.
fn path_posterior(env: &FactoredPomdp, h: &History) -> BTreeMap<StateVector, f64> {
    let mut paths: Vec<(StateVector, f64)> =
        env.initial().iter().filter(|(s, _)| env.observe(s) == h.observations[0]).cloned().collect();
    for (a, o) in h.actions.iter().zip(&h.observations[1..]) {
        let mut next = Vec::new();
        for (s, p) in &paths {
            for out in env.outcomes(s, *a) {
                if env.observe(&out.next) == *o {
                    next.push((out.next, p * out.prob));
                }
            }
        }
        paths = next;
    }
    let total: f64 = paths.iter().map(|(_, p)| p).sum();
    let mut m = BTreeMap::new();
    for (s, p) in paths {
        *m.entry(s).or_insert(0.0) += p / total;
    }
    m
}

fn sample_history(env: &FactoredPomdp, len: usize, rng: &mut ChaCha8Rng) -> History {
    let mut s = env.sample_initial(rng);
    let mut h = History::initial(env.observe(&s));
    for t in 0..len {
        if env.is_terminal(&s) || t >= env.horizon() {
            break;
        }
        let a = ActionId(rng.gen_range(0..env.num_actions()));
        let out = env.step(&s, t, a, rng).expect("sampled step is valid");
        h.actions.push(a);
        h.observations.push(out.observation);
        s = out.state;
    }
    h
}

fn numerical_foundations() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grad = gradcheck::check_random_cases(100, &mut rng).map_err(err)?;
    let mut worst_belief: f64 = 0.0;
    let mut envs_list = vec![noisy_env()];
    for name in [EnvName::FrozenTMaze, EnvName::Key2Door, EnvName::Diversion] {
        envs_list.push(envs::wrap_random_override(&envs::build(name, EnvVariant::Eval), 0.3).map_err(err)?);
    }
    for env in &envs_list {
        for _ in 0..25 {
            let h = sample_history(env, 6, &mut rng);
            let b = belief_from_history(env, &h).map_err(err)?;
            let oracle = path_posterior(env, &h);
            if b.len() != oracle.len() {
                return Ok((false, format!("belief support {} vs {} on {}", b.len(), oracle.len(), env.name())));
            }
            for (s, p) in &oracle {
                worst_belief = worst_belief.max((b.prob(s) - p).abs());
            }
        }
    }
    let (chain_ret, chain_opt) = dqn_on_chain().map_err(err)?;
    let chain_gap = (chain_ret - chain_opt).abs();
    Ok((
        grad < 1e-4 && worst_belief < 1e-9 && chain_gap <= 0.05,
        format!(
            "gradcheck max rel err {grad:.2e}; belief max abs err {worst_belief:.1e} over 100 histories; dqn chain return {chain_ret:.3} vs optimum {chain_opt:.3}"
        ),
    ))
}

/// Five cells, reward 1 on reaching the right end, −0.1 per other step.
fn chain() -> FactoredPomdp {
    FactoredPomdp::builder("chain", "train")
        .variable("pos", 5)
        .actions(&["left", "right"])
        .initial(vec![(StateVector(vec![0]), 1.0)])
        .horizon(10)
        .build(
            |s, a| {
                let p = s.get(0);
                let next = if a == ActionId(1) { (p + 1).min(4) } else { p.saturating_sub(1) };
                vec![Outcome { next: StateVector(vec![next]), prob: 1.0, reward: if next == 4 { 1.0 } else { -0.1 } }]
            },
            |s| ObservationVector::project(s, &[0]),
            |s| s.get(0) == 4,
        )
        .expect("chain is well formed")
}

fn dqn_on_chain() -> confound_agents::Result<(f64, f64)> {
    let env = chain();
    let opt = optimal_return(&env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut runner = StackedEnv::new(env.clone(), Encoder::for_env(&env), 1, 11)?;
    let cfg = DqnConfig {
        buffer_size: 5_000,
        learning_starts: 200,
        batch_size: 32,
        train_freq: 1,
        target_update_interval: 100,
        gamma: 1.0,
        learning_rate: 1e-3,
        exploration_fraction: 0.5,
        total_steps: 4_000,
        hidden: vec![32, 32],
        ..DqnConfig::default()
    };
    let mut agent = DqnAgent::new(cfg, runner.obs_len(), 2, &mut rng)?;
    train_dqn(&mut agent, &mut runner, 4_000, &mut rng, |_, _| Ok(()))?;
    let ret = evaluate(&env, 1, 1, 0, |o| agent.greedy(o))?;
    Ok((ret, opt))
}

struct Runs {
    root: PathBuf,
    seeds: Vec<u64>,
    jobs: usize,
    cache: BTreeMap<String, RunOutput>,
}

impl Runs {
    fn get(&mut self, env: EnvName, setting: Setting) -> Result<&RunOutput, String> {
        let key = format!("{env}-{}", setting.as_str());
        if !self.cache.contains_key(&key) {
            let mut cfg = setting.config(env, &self.root.join(&key));
            cfg.seeds = self.seeds.clone();
            let start = Instant::now();
            let run = run_experiment(&cfg, self.jobs, true).map_err(err)?;
            eprintln!(
                "  {key}: {} in {:.0}s",
                if run.reused { "reused" } else { "trained" },
                start.elapsed().as_secs_f64()
            );
            self.cache.insert(key.clone(), run);
        }
        Ok(&self.cache[&key])
    }

    fn curves(&mut self, env: EnvName, setting: Setting) -> Result<(Vec<(usize, f64)>, Vec<(usize, f64)>), String> {
        let run = self.get(env, setting)?;
        Ok((curve(&run.summary, EnvVariant::Train), curve(&run.summary, EnvVariant::Eval)))
    }
}

fn last(c: &[(usize, f64)]) -> f64 {
    c.last().map_or(f64::NAN, |p| p.1)
}

fn peak(c: &[(usize, f64)]) -> f64 {
    c.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
}

/// Mean of the points with step strictly after `after`.
fn mean_after(c: &[(usize, f64)], after: usize) -> f64 {
    let v: Vec<f64> = c.iter().filter(|p| p.0 > after).map(|p| p.1).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn min_from(c: &[(usize, f64)], from: usize) -> f64 {
    c.iter().filter(|p| p.0 >= from).map(|p| p.1).fold(f64::INFINITY, f64::min)
}

fn optimum(env: EnvName, v: EnvVariant) -> Result<f64, String> {
    optimal_return(&envs::build(env, v)).map_err(err)
}

const LEARNING_ENVS: [EnvName; 3] = [EnvName::FrozenTMaze, EnvName::Key2Door, EnvName::Diversion];

/// Probe grids per seed and checkpoint of the T-Maze PPO run.
fn probe_grids(runs: &mut Runs, direction: Direction) -> Result<BTreeMap<(u64, usize), ProbeGrid>, String> {
    let run = runs.get(EnvName::FrozenTMaze, Setting::Ppo)?.clone();
    let mut out = BTreeMap::new();
    for &seed in &runs.seeds {
        for step in [0, 10_000, 30_000, 100_000] {
            let path = checkpoint_path(&run.dir, seed, step);
            out.insert((seed, step), kl_probe_path(&path, EnvName::FrozenTMaze, step, direction).map_err(err)?);
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let seeds: u64 = std::env::var("ACCEPTANCE_SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(10);
    let root = std::env::var("ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-runs"));
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut suite = Suite { passed: 0, failed: 0, errors: 0 };
    let quorum = (seeds as usize * 7).div_ceil(10);

    suite.run("tmaze location keep-set is pi-markov, not markov, and confounded", Some(10.0), location_rep_on_tmaze);
    suite.run("tmaze minimal reps keep the signal; pi-minimal is strictly smaller later", Some(60.0), tmaze_minimal_vs_pi_minimal);
    suite.run("watch-time clock is superfluous yet pi-markov only under the optimal policy", Some(60.0), watch_time_clock);
    suite.run("greedy restriction histories stay inside the full-support set (100 pairs per env)", Some(300.0), support_inclusion_pairs);
    suite.run("dbn conditional-probability claims on diversion and key2door", None, dbn_checks);
    suite.run("numerical foundations: gradients, belief filter, dqn chain", Some(300.0), numerical_foundations);

    eprintln!("training runs: {seeds} seeds, cache {}", root.display());
    let mut runs = Runs { root, seeds: (0..seeds).collect(), jobs, cache: BTreeMap::new() };

    for env in LEARNING_ENVS {
        suite.run(&format!("ppo train return reaches 90% of optimum and holds over the last 20K steps ({env})"), None, || {
            let opt = optimum(env, EnvVariant::Train)?;
            let (train, _) = runs.curves(env, Setting::Ppo)?;
            let low = min_from(&train, 80_000);
            Ok((low >= 0.9 * opt, format!("min over last 20K {low:.3}, threshold {:.3}", 0.9 * opt)))
        });
        suite.run(&format!("ppo eval return ends at least 0.3 below its peak ({env})"), None, || {
            let (_, eval) = runs.curves(env, Setting::Ppo)?;
            let (p, f) = (peak(&eval), last(&eval));
            Ok((p - f >= 0.3, format!("peak {p:.3}, final {f:.3}, drop {:.3}", p - f)))
        });
        suite.run(&format!("dqn 100K-buffer eval return ends within 0.15 of the eval optimum ({env})"), None, || {
            let opt = optimum(env, EnvVariant::Eval)?;
            let (_, eval) = runs.curves(env, Setting::DqnLarge)?;
            let f = last(&eval);
            Ok((opt - f <= 0.15, format!("final {f:.3}, eval optimum {opt:.3}")))
        });
    }

    let t = EnvName::FrozenTMaze;
    suite.run("tmaze dqn 10K buffer: final-10K eval return at least 0.3 below the 100K buffer", None, || {
        let (_, small) = runs.curves(t, Setting::DqnSmall)?;
        let (_, large) = runs.curves(t, Setting::DqnLarge)?;
        let (s, l) = (mean_after(&small, 90_000), mean_after(&large, 90_000));
        Ok((l - s >= 0.3, format!("10K buffer {s:.3}, 100K buffer {l:.3}")))
    });
    suite.run("tmaze dqn final eps 0.1 (10K buffer): eval return within 0.15 of train return", None, || {
        let (train, eval) = runs.curves(t, Setting::DqnSmallEps)?;
        let (tr, ev) = (mean_after(&train, 90_000), mean_after(&eval, 90_000));
        Ok(((tr - ev).abs() <= 0.15, format!("final-10K train {tr:.3}, eval {ev:.3}")))
    });
    suite.run("tmaze ppo with 20% random override: final eval within 0.1 of its peak", None, || {
        let (_, eval) = runs.curves(t, Setting::PpoOverride)?;
        let (p, f) = (peak(&eval), last(&eval));
        Ok((p - f <= 0.1, format!("peak {p:.3}, final {f:.3}")))
    });

    let k = EnvName::Key2Door;
    for (setting, what) in [(Setting::PpoOverride, "ppo with 20% random override"), (Setting::DqnSmallEps, "dqn final eps 0.1 (10K buffer)")] {
        suite.run(&format!("key2door {what}: eval return still ends at least 0.3 below its peak"), None, || {
            let (_, eval) = runs.curves(k, setting)?;
            let (p, f) = (peak(&eval), last(&eval));
            Ok((p - f >= 0.3, format!("peak {p:.3}, final {f:.3}, drop {:.3}", p - f)))
        });
    }

    let d = Direction::GreenToPurple;
    let junction = d.junction();
    let start = tmaze::START;
    let grids = probe_grids(&mut runs, d);
    suite.run("probe: untrained networks have max KL below 1e-4", None, || {
        let g = grids.as_ref().map_err(Clone::clone)?;
        let m = g.iter().filter(|((_, s), _)| *s == 0).filter_map(|(_, g)| g.max()).fold(0.0, f64::max);
        Ok((m < 1e-4, format!("max step-0 KL {m:.2e}")))
    });
    suite.run("probe: at 10K steps the largest KL sits at the corridor junction", None, || {
        let g = grids.as_ref().map_err(Clone::clone)?;
        let hits: Vec<String> = runs
            .seeds
            .iter()
            .map(|s| g[&(*s, 10_000)].argmax().map_or("-".into(), |((r, c), _)| format!("({r},{c})")))
            .collect();
        let n = hits.iter().filter(|h| **h == format!("({},{})", junction.0, junction.1)).count();
        Ok((n >= quorum, format!("{n}/{} seeds; argmax cells {}", runs.seeds.len(), hits.join(" "))))
    });
    suite.run("probe: from 30K to 100K the start cell has the largest KL and junction KL falls", None, || {
        let g = grids.as_ref().map_err(Clone::clone)?;
        let mut n = 0;
        let mut notes = Vec::new();
        for s in &runs.seeds {
            let (a, b) = (&g[&(*s, 30_000)], &g[&(*s, 100_000)]);
            let start_max = [a, b].iter().all(|x| x.argmax().map(|(c, _)| c) == Some(start));
            let falls = matches!((a.get(junction), b.get(junction)), (Some(x), Some(y)) if y < x);
            n += usize::from(start_max && falls);
            notes.push(format!("{}{}", if start_max { 'S' } else { '-' }, if falls { 'J' } else { '-' }));
        }
        Ok((n >= quorum, format!("{n}/{} seeds (S = start max, J = junction falls): {}", runs.seeds.len(), notes.join(" "))))
    });

    println!("acceptance: {} passed, {} failed, {} errors", suite.passed, suite.failed, suite.errors);
    if suite.errors > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
