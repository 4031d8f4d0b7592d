//! Factored POMDPs with deterministic emissions.
//!
//! States are vectors of small-integer factors. Transitions are given as
//! lists of [`Outcome`]s, each carrying the reward of that branch, so that
//! the expected reward `R(s, a)` and the reward actually realized in a
//! sampled step are both available from the same table.

mod belief;
mod dump;
mod histories;
mod optimal;
mod policy;

pub use belief::{belief_from_history, belief_update, initial_belief, Belief};
pub use dump::dump_env;
pub use histories::{
    enumerate_histories, enumerate_histories_capped, history_reward, history_transition, History, HistoryNode,
    HistorySet, NodeId, DEFAULT_HISTORY_CAP,
};
pub use optimal::{optimal_return, policy_return};
pub use policy::{
    greedy_restriction, GreedyRestriction, PlanPolicy, Policy, RandomFullSupportPolicy, TabularPolicy, UniformPolicy,
};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{CoreError, Result};

/// Absolute tolerance for probability comparisons in the exact core.
pub const PROB_TOL: f64 = 1e-9;

/// One state factor with a finite domain `0..domain`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub index: usize,
    pub domain: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateVector(pub Vec<u8>);

impl StateVector {
    pub fn get(&self, var: usize) -> u8 {
        self.0[var]
    }

    pub fn with(&self, var: usize, value: u8) -> StateVector {
        let mut v = self.0.clone();
        v[var] = value;
        StateVector(v)
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(" "))
    }
}

/// The visible subset of a state: `(variable index, value)` pairs sorted by
/// variable index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObservationVector {
    pub visible: Vec<(usize, u8)>,
}

impl ObservationVector {
    pub fn new(mut visible: Vec<(usize, u8)>) -> Self {
        visible.sort_unstable();
        ObservationVector { visible }
    }

    /// Observation exposing `vars` of `state`.
    pub fn project(state: &StateVector, vars: &[usize]) -> Self {
        ObservationVector::new(vars.iter().map(|&v| (v, state.get(v))).collect())
    }

    pub fn value(&self, var: usize) -> Option<u8> {
        self.visible.iter().find(|(v, _)| *v == var).map(|(_, x)| *x)
    }
}

/// One branch of a transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: StateVector,
    pub prob: f64,
    pub reward: f64,
}

pub type DynamicsFn = dyn Fn(&StateVector, ActionId) -> Vec<Outcome> + Send + Sync;
pub type EmissionFn = dyn Fn(&StateVector) -> ObservationVector + Send + Sync;
pub type TerminalFn = dyn Fn(&StateVector) -> bool + Send + Sync;

/// A finite-horizon factored POMDP.
///
/// Cheap to clone; all functions are shared behind `Arc`s and the value is
/// immutable after construction.
#[derive(Clone)]
pub struct FactoredPomdp {
    name: String,
    variant: String,
    variables: Vec<Variable>,
    actions: Vec<String>,
    initial: Vec<(StateVector, f64)>,
    horizon: usize,
    dynamics: Arc<DynamicsFn>,
    emission: Arc<EmissionFn>,
    terminal: Arc<TerminalFn>,
}

impl fmt::Debug for FactoredPomdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactoredPomdp")
            .field("name", &self.name)
            .field("variant", &self.variant)
            .field("variables", &self.variables)
            .field("actions", &self.actions)
            .field("horizon", &self.horizon)
            .finish()
    }
}

/// Result of one simulated step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: StateVector,
    pub observation: ObservationVector,
    pub reward: f64,
    pub terminal: bool,
}

pub struct PomdpBuilder {
    name: String,
    variant: String,
    variables: Vec<Variable>,
    actions: Vec<String>,
    initial: Vec<(StateVector, f64)>,
    horizon: usize,
}

impl PomdpBuilder {
    pub fn variable(mut self, name: &str, domain: u8) -> Self {
        let index = self.variables.len();
        self.variables.push(Variable { name: name.to_string(), index, domain });
        self
    }

    pub fn actions(mut self, labels: &[&str]) -> Self {
        self.actions = labels.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn initial(mut self, dist: Vec<(StateVector, f64)>) -> Self {
        self.initial = dist;
        self
    }

    pub fn horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn build<D, E, T>(self, dynamics: D, emission: E, terminal: T) -> Result<FactoredPomdp>
    where
        D: Fn(&StateVector, ActionId) -> Vec<Outcome> + Send + Sync + 'static,
        E: Fn(&StateVector) -> ObservationVector + Send + Sync + 'static,
        T: Fn(&StateVector) -> bool + Send + Sync + 'static,
    {
        FactoredPomdp::from_parts(
            self.name,
            self.variant,
            self.variables,
            self.actions,
            self.initial,
            self.horizon,
            Arc::new(dynamics),
            Arc::new(emission),
            Arc::new(terminal),
        )
    }
}

impl FactoredPomdp {
    pub fn builder(name: &str, variant: &str) -> PomdpBuilder {
        PomdpBuilder {
            name: name.to_string(),
            variant: variant.to_string(),
            variables: Vec::new(),
            actions: Vec::new(),
            initial: Vec::new(),
            horizon: 1,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        name: String,
        variant: String,
        variables: Vec<Variable>,
        actions: Vec<String>,
        initial: Vec<(StateVector, f64)>,
        horizon: usize,
        dynamics: Arc<DynamicsFn>,
        emission: Arc<EmissionFn>,
        terminal: Arc<TerminalFn>,
    ) -> Result<FactoredPomdp> {
        if horizon == 0 {
            return Err(CoreError::Contract("horizon must be at least 1".into()));
        }
        if actions.is_empty() {
            return Err(CoreError::Contract("at least one action is required".into()));
        }
        if initial.is_empty() {
            return Err(CoreError::Contract("initial distribution is empty".into()));
        }
        let labels: BTreeSet<&String> = actions.iter().collect();
        if labels.len() != actions.len() {
            return Err(CoreError::Contract("action labels must be unique".into()));
        }
        let names: BTreeSet<&String> = variables.iter().map(|v| &v.name).collect();
        if names.len() != variables.len() {
            return Err(CoreError::Contract("variable names must be unique".into()));
        }
        let mass: f64 = initial.iter().map(|(_, p)| p).sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(CoreError::Contract(format!("initial distribution sums to {mass}")));
        }
        let env = FactoredPomdp {
            name,
            variant,
            variables,
            actions,
            initial: merge_states(initial),
            horizon,
            dynamics,
            emission,
            terminal,
        };
        for (s, _) in &env.initial {
            env.check_state(s)?;
        }
        Ok(env)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variant(&self) -> &str {
        &self.variant
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_index(&self, label: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a == label).map(ActionId)
    }

    pub fn action_label(&self, a: ActionId) -> &str {
        &self.actions[a.0]
    }

    pub fn initial(&self) -> &[(StateVector, f64)] {
        &self.initial
    }

    /// Maximum number of actions per episode.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn check_state(&self, s: &StateVector) -> Result<()> {
        if s.0.len() != self.variables.len() {
            return Err(CoreError::Contract(format!(
                "state {s} has {} factors, expected {}",
                s.0.len(),
                self.variables.len()
            )));
        }
        for (v, x) in self.variables.iter().zip(&s.0) {
            if *x >= v.domain {
                return Err(CoreError::Contract(format!(
                    "factor {} = {x} outside domain 0..{}",
                    v.name, v.domain
                )));
            }
        }
        Ok(())
    }

    pub fn check_action(&self, a: ActionId) -> Result<()> {
        if a.0 >= self.actions.len() {
            return Err(CoreError::Contract(format!(
                "action {} outside 0..{}",
                a.0,
                self.actions.len()
            )));
        }
        Ok(())
    }

    /// Transition branches with identical `(next, reward)` merged, in a
    /// deterministic order and with zero-probability branches dropped.
    pub fn outcomes(&self, s: &StateVector, a: ActionId) -> Vec<Outcome> {
        let mut merged: BTreeMap<(StateVector, i64), Outcome> = BTreeMap::new();
        for o in (self.dynamics)(s, a) {
            if o.prob <= 0.0 {
                continue;
            }
            let key = (o.next.clone(), quantize(o.reward));
            merged
                .entry(key)
                .and_modify(|m| m.prob += o.prob)
                .or_insert(o);
        }
        merged.into_values().collect()
    }

    /// `T(· | s, a)` as a sorted list of `(next state, probability)`.
    pub fn transition(&self, s: &StateVector, a: ActionId) -> Vec<(StateVector, f64)> {
        merge_states(self.outcomes(s, a).into_iter().map(|o| (o.next, o.prob)).collect())
    }

    /// Expected immediate reward `R(s, a)`.
    pub fn reward(&self, s: &StateVector, a: ActionId) -> f64 {
        self.outcomes(s, a).iter().map(|o| o.prob * o.reward).sum()
    }

    pub fn observe(&self, s: &StateVector) -> ObservationVector {
        (self.emission)(s)
    }

    pub fn is_terminal(&self, s: &StateVector) -> bool {
        (self.terminal)(s)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        sample(&self.initial, |(_, p)| *p, rng).0.clone()
    }

    /// Samples one transition from `state`, where `t` actions have already
    /// been taken in the episode.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &StateVector,
        t: usize,
        action: ActionId,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        self.check_state(state)?;
        self.check_action(action)?;
        if self.is_terminal(state) {
            return Err(CoreError::Contract(format!("step from terminal state {state}")));
        }
        if t >= self.horizon {
            return Err(CoreError::Contract(format!(
                "step at t={t} beyond horizon {}",
                self.horizon
            )));
        }
        let outcomes = self.outcomes(state, action);
        let chosen = sample(&outcomes, |o| o.prob, rng);
        let terminal = self.is_terminal(&chosen.next) || t + 1 == self.horizon;
        Ok(StepOutcome {
            observation: self.observe(&chosen.next),
            state: chosen.next.clone(),
            reward: chosen.reward,
            terminal,
        })
    }

    /// All states reachable from the initial distribution within the horizon,
    /// sorted.
    pub fn reachable_states(&self) -> Vec<StateVector> {
        let mut seen: BTreeSet<StateVector> = BTreeSet::new();
        let mut queue: VecDeque<(StateVector, usize)> = VecDeque::new();
        for (s, _) in &self.initial {
            if seen.insert(s.clone()) {
                queue.push_back((s.clone(), 0));
            }
        }
        while let Some((s, t)) = queue.pop_front() {
            if t >= self.horizon || self.is_terminal(&s) {
                continue;
            }
            for a in 0..self.num_actions() {
                for (n, _) in self.transition(&s, ActionId(a)) {
                    if seen.insert(n.clone()) {
                        queue.push_back((n, t + 1));
                    }
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Checks every reachable state: domains, normalized transitions.
    pub fn validate(&self) -> Result<()> {
        for s in self.reachable_states() {
            self.check_state(&s)?;
            let obs = self.observe(&s);
            for (v, _) in &obs.visible {
                if *v >= self.variables.len() {
                    return Err(CoreError::Contract(format!("emission names unknown factor {v}")));
                }
            }
            if self.is_terminal(&s) {
                continue;
            }
            for a in 0..self.num_actions() {
                let mass: f64 = self.transition(&s, ActionId(a)).iter().map(|(_, p)| p).sum();
                if (mass - 1.0).abs() > 1e-12 {
                    return Err(CoreError::Contract(format!(
                        "T(.|{s},{a}) sums to {mass}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same environment with a different dynamics function.
    pub(crate) fn with_dynamics(&self, variant: String, dynamics: Arc<DynamicsFn>) -> FactoredPomdp {
        FactoredPomdp {
            variant,
            dynamics,
            ..self.clone()
        }
    }
}

/// A seeded episode stream over one environment.
pub struct Episode {
    env: FactoredPomdp,
    rng: rand_chacha::ChaCha8Rng,
    state: StateVector,
    t: usize,
    done: bool,
}

impl Episode {
    pub fn new(env: FactoredPomdp, seed: u64) -> Self {
        use rand::SeedableRng;
        let rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let state = env.initial[0].0.clone();
        Episode { env, rng, state, t: 0, done: true }
    }

    pub fn reset(&mut self) -> (StateVector, ObservationVector) {
        self.state = self.env.sample_initial(&mut self.rng);
        self.t = 0;
        self.done = false;
        (self.state.clone(), self.env.observe(&self.state))
    }

    pub fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        if self.done {
            return Err(CoreError::Contract("step on a finished episode".into()));
        }
        let out = self.env.step(&self.state, self.t, action, &mut self.rng)?;
        self.state = out.state.clone();
        self.t += 1;
        self.done = out.terminal;
        Ok(out)
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn env(&self) -> &FactoredPomdp {
        &self.env
    }
}

/// Starts a seeded episode and returns the first state and observation.
pub fn reset(env: &FactoredPomdp, seed: u64) -> (Episode, StateVector, ObservationVector) {
    let mut ep = Episode::new(env.clone(), seed);
    let (s, o) = ep.reset();
    (ep, s, o)
}

pub(crate) fn quantize(x: f64) -> i64 {
    (x / PROB_TOL).round() as i64
}

fn merge_states(items: Vec<(StateVector, f64)>) -> Vec<(StateVector, f64)> {
    let mut m: BTreeMap<StateVector, f64> = BTreeMap::new();
    for (s, p) in items {
        if p > 0.0 {
            *m.entry(s).or_insert(0.0) += p;
        }
    }
    m.into_iter().collect()
}

fn sample<'a, T, R: Rng + ?Sized>(items: &'a [T], weight: impl Fn(&T) -> f64, rng: &mut R) -> &'a T {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for item in items {
        acc += weight(item);
        if u < acc {
            return item;
        }
    }
    items.last().expect("non-empty distribution")
}
