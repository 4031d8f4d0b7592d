//! Stacked-observation episode runner shared by both agents.

use std::sync::Arc;

use confound_core::envs::{encode_observation, observation_width, EnvName};
use confound_core::fpomdp::{ActionId, Episode, FactoredPomdp, ObservationVector};

use crate::error::{AgentError, Result};
use crate::stack::ObservationStack;

/// Frames per stacked observation.
pub const STACK_FRAMES: usize = 10;

/// Turns one observation into a fixed-width numeric vector.
#[derive(Clone)]
pub struct Encoder {
    width: usize,
    f: Arc<dyn Fn(&ObservationVector) -> Vec<f64> + Send + Sync>,
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoder").field("width", &self.width).finish()
    }
}

impl Encoder {
    pub fn new<F>(width: usize, f: F) -> Self
    where
        F: Fn(&ObservationVector) -> Vec<f64> + Send + Sync + 'static,
    {
        Encoder { width, f: Arc::new(f) }
    }

    /// The documented encoding of one of the four gridworlds.
    pub fn gridworld(name: EnvName) -> Self {
        Encoder::new(observation_width(name), move |o| encode_observation(name, o))
    }

    /// Gridworld encoding when the environment is one, else a one-hot block
    /// per factor with unobserved factors left at zero.
    pub fn for_env(env: &FactoredPomdp) -> Self {
        if let Ok(name) = EnvName::of(env) {
            return Encoder::gridworld(name);
        }
        let domains: Vec<usize> = env.variables().iter().map(|v| v.domain as usize).collect();
        let mut offsets = Vec::with_capacity(domains.len());
        let mut width = 0;
        for d in &domains {
            offsets.push(width);
            width += d;
        }
        Encoder::new(width, move |o| {
            let mut v = vec![0.0; width];
            for &(var, val) in &o.visible {
                v[offsets[var] + val as usize] = 1.0;
            }
            v
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn encode(&self, obs: &ObservationVector) -> Result<Vec<f64>> {
        let v = (self.f)(obs);
        if v.len() != self.width {
            return Err(AgentError::Width { expected: self.width, got: v.len() });
        }
        Ok(v)
    }
}

/// Result of one [`StackedEnv::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub reward: f64,
    /// Stacked observation after the action, before any automatic reset.
    pub next_obs: Vec<f64>,
    /// The environment reached a terminal state.
    pub terminal: bool,
    /// The episode hit the time limit in a non-terminal state.
    pub truncated: bool,
    /// Undiscounted return of the episode that just ended, if one did.
    pub episode_return: Option<f64>,
}

impl EnvStep {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Seeded episode stream with an observation stack; starts a new episode
/// automatically when one ends.
pub struct StackedEnv {
    episode: Episode,
    encoder: Encoder,
    stack: ObservationStack,
    episode_return: f64,
    episodes: usize,
}

impl StackedEnv {
    pub fn new(env: FactoredPomdp, encoder: Encoder, frames: usize, seed: u64) -> Result<Self> {
        if frames == 0 {
            return Err(AgentError::Config("stack needs at least one frame".into()));
        }
        let stack = ObservationStack::new(frames, encoder.width());
        let mut s = StackedEnv { episode: Episode::new(env, seed), encoder, stack, episode_return: 0.0, episodes: 0 };
        s.reset()?;
        Ok(s)
    }

    /// Gridworld encoding with the standard ten-frame stack.
    pub fn standard(env: FactoredPomdp, seed: u64) -> Result<Self> {
        let enc = Encoder::for_env(&env);
        StackedEnv::new(env, enc, STACK_FRAMES, seed)
    }

    pub fn env(&self) -> &FactoredPomdp {
        self.episode.env()
    }

    pub fn num_actions(&self) -> usize {
        self.env().num_actions()
    }

    pub fn obs_len(&self) -> usize {
        self.stack.len()
    }

    pub fn episodes_finished(&self) -> usize {
        self.episodes
    }

    pub fn t(&self) -> usize {
        self.episode.t()
    }

    /// Current stacked observation.
    pub fn obs(&self) -> &[f64] {
        self.stack.as_slice()
    }

    pub fn reset(&mut self) -> Result<&[f64]> {
        let (_, o) = self.episode.reset();
        self.stack.reset();
        self.episode_return = 0.0;
        let enc = self.encoder.encode(&o)?;
        self.stack.push(&enc)
    }

    pub fn step(&mut self, action: ActionId) -> Result<EnvStep> {
        let out = self.episode.step(action)?;
        self.episode_return += out.reward;
        let enc = self.encoder.encode(&out.observation)?;
        let next_obs = self.stack.push(&enc)?.to_vec();
        let terminal = self.episode.env().is_terminal(&out.state);
        let truncated = out.terminal && !terminal;
        let mut episode_return = None;
        if out.terminal {
            episode_return = Some(self.episode_return);
            self.episodes += 1;
            self.reset()?;
        }
        Ok(EnvStep { reward: out.reward, next_obs, terminal, truncated, episode_return })
    }
}

/// Mean undiscounted return of `episodes` episodes played with `act`.
pub fn evaluate<F>(env: &FactoredPomdp, frames: usize, episodes: usize, seed: u64, mut act: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<ActionId>,
{
    if episodes == 0 {
        return Err(AgentError::Config("evaluation needs at least one episode".into()));
    }
    let mut runner = StackedEnv::new(env.clone(), Encoder::for_env(env), frames, seed)?;
    let mut total = 0.0;
    let mut done = 0;
    while done < episodes {
        let a = act(runner.obs())?;
        if let Some(ret) = runner.step(a)?.episode_return {
            total += ret;
            done += 1;
        }
    }
    Ok(total / episodes as f64)
}
