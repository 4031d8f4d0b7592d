//! Deep Q-learning with a FIFO replay buffer and a hard-synced target net.

use confound_core::fpomdp::ActionId;
use confound_nn::loss::{clip_grad_norm, huber};
use confound_nn::{Adam, Head, Mlp};
use rand::Rng;

use crate::env::StackedEnv;
use crate::error::{AgentError, Result};
use crate::replay::{ReplayBuffer, SparseObs, Transition};
use crate::schedule::EpsilonSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub buffer_size: usize,
    pub learning_starts: usize,
    pub batch_size: usize,
    pub train_freq: usize,
    /// Hard target sync period in environment steps.
    pub target_update_interval: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub exploration_fraction: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub total_steps: usize,
    pub hidden: Vec<usize>,
    pub max_grad_norm: f64,
    pub huber_delta: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            buffer_size: 100_000,
            learning_starts: 1_000,
            batch_size: 256,
            train_freq: 5,
            target_update_interval: 500,
            gamma: 0.99,
            learning_rate: 2.5e-4,
            exploration_fraction: 0.2,
            eps_start: 1.0,
            eps_end: 0.0,
            total_steps: 100_000,
            hidden: vec![128, 128],
            max_grad_norm: 10.0,
            huber_delta: 1.0,
        }
    }
}

impl DqnConfig {
    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.eps_start,
            end: self.eps_end,
            fraction: self.exploration_fraction,
            total_steps: self.total_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if self.buffer_size == 0 || self.batch_size == 0 || self.train_freq == 0 {
            return bad("buffer size, batch size and train frequency must be positive");
        }
        if self.target_update_interval == 0 {
            return bad("target update interval must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.learning_rate <= 0.0 || self.max_grad_norm <= 0.0 || self.huber_delta <= 0.0 {
            return bad("learning rate, gradient clip and huber delta must be positive");
        }
        Ok(())
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub struct DqnAgent {
    cfg: DqnConfig,
    schedule: EpsilonSchedule,
    online: Mlp,
    target: Mlp,
    opt: Adam,
    buffer: ReplayBuffer,
    grads: Vec<f64>,
    updates: usize,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(cfg: DqnConfig, obs_len: usize, num_actions: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![obs_len];
        sizes.extend(&cfg.hidden);
        sizes.push(num_actions);
        let online = Mlp::uniform_fan_in(&sizes, Head::Linear, rng)?;
        let target = online.clone();
        let opt = Adam::new(online.num_params(), cfg.learning_rate);
        Ok(DqnAgent {
            schedule: cfg.schedule(),
            buffer: ReplayBuffer::new(cfg.buffer_size),
            grads: vec![0.0; online.num_params()],
            cfg,
            online,
            target,
            opt,
            updates: 0,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn epsilon(&self, step: usize) -> f64 {
        self.schedule.value(step)
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.online.predict(obs)?)
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<ActionId> {
        Ok(ActionId(argmax(&self.q_values(obs)?)))
    }

    /// ε-greedy action at global step `step`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], step: usize, rng: &mut R) -> Result<ActionId> {
        let eps = self.schedule.value(step);
        if eps > 0.0 && rng.gen::<f64>() < eps {
            return Ok(ActionId(rng.gen_range(0..self.online.output_size())));
        }
        self.greedy(obs)
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    pub fn sync_target(&mut self) -> Result<()> {
        Ok(self.target.copy_from(&self.online)?)
    }

    /// One gradient step on a uniform batch. `None` until the buffer holds
    /// `learning_starts` transitions; otherwise the mean Huber loss.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        if self.buffer.is_empty() || self.buffer.len() < self.cfg.learning_starts {
            return Ok(None);
        }
        let idx = self.buffer.sample_indices(self.cfg.batch_size, rng);
        Ok(Some(self.update_on(&idx)?))
    }

    /// Gradient step on the buffer entries at `idx`.
    pub fn update_on(&mut self, idx: &[usize]) -> Result<f64> {
        let n = idx.len();
        let width = self.online.input_size();
        let na = self.online.output_size();
        let mut x = vec![0.0; n * width];
        let mut xn = vec![0.0; n * width];
        for (row, &i) in idx.iter().enumerate() {
            let t = self.buffer.get(i).ok_or_else(|| AgentError::Config(format!("replay index {i}")))?;
            for (o, dst) in [(&t.obs, &mut x), (&t.next_obs, &mut xn)] {
                if o.width() != width {
                    return Err(AgentError::Width { expected: width, got: o.width() });
                }
                o.fill(&mut dst[row * width..(row + 1) * width]);
            }
        }
        let next_q = self.target.forward(&xn, n)?;
        let acts = self.online.forward(&x, n)?;
        let q = acts.output();
        let mut d_out = vec![0.0; n * na];
        let mut loss = 0.0;
        for (row, &i) in idx.iter().enumerate() {
            let t = self.buffer.get(i).expect("checked above");
            let mut target = t.reward;
            if !t.terminal {
                let nq = &next_q.output()[row * na..(row + 1) * na];
                target += self.cfg.gamma * nq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            }
            let (l, d) = huber(q[row * na + t.action], target, self.cfg.huber_delta);
            loss += l;
            d_out[row * na + t.action] = d / n as f64;
        }
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        self.online.backward(&x, &acts, &d_out, &mut self.grads)?;
        clip_grad_norm(&mut self.grads, self.cfg.max_grad_norm);
        self.opt.step(self.online.params_mut(), &self.grads)?;
        self.updates += 1;
        Ok(loss / n as f64)
    }

    /// Bookkeeping after the `step`-th environment step (counting from 1):
    /// train every `train_freq` steps and sync the target net on schedule.
    pub fn after_env_step<R: Rng + ?Sized>(&mut self, step: usize, rng: &mut R) -> Result<Option<f64>> {
        let mut loss = None;
        if step > self.cfg.learning_starts && step.is_multiple_of(self.cfg.train_freq) {
            loss = self.update(rng)?;
        }
        if step.is_multiple_of(self.cfg.target_update_interval) {
            self.sync_target()?;
        }
        Ok(loss)
    }
}

/// Trains for `total_steps` environment steps. `hook` runs before the first
/// step with 0 and after every step with the number of steps taken.
pub fn train_dqn<R, F>(agent: &mut DqnAgent, env: &mut StackedEnv, total_steps: usize, rng: &mut R, mut hook: F) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &DqnAgent) -> Result<()>,
{
    if env.obs_len() != agent.online.input_size() {
        return Err(AgentError::Width { expected: agent.online.input_size(), got: env.obs_len() });
    }
    hook(0, agent)?;
    for step in 1..=total_steps {
        let obs = env.obs().to_vec();
        let a = agent.act(&obs, step - 1, rng)?;
        let out = env.step(a)?;
        agent.remember(Transition {
            obs: SparseObs::new(&obs),
            action: a.0,
            reward: out.reward,
            next_obs: SparseObs::new(&out.next_obs),
            terminal: out.terminal,
        });
        agent.after_env_step(step, rng)?;
        hook(step, agent)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(buffer: usize) -> DqnConfig {
        DqnConfig { buffer_size: buffer, learning_starts: 1, batch_size: 4, hidden: vec![8], ..DqnConfig::default() }
    }

    fn tr(obs: &[f64], action: usize, reward: f64, terminal: bool) -> Transition {
        Transition { obs: SparseObs::new(obs), action, reward, next_obs: SparseObs::new(obs), terminal }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn epsilon_one_is_uniform_and_zero_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = DqnConfig { eps_start: 1.0, eps_end: 1.0, ..small(10) };
        let agent = DqnAgent::new(cfg, 3, 4, &mut rng).unwrap();
        let mut counts = [0usize; 4];
        for s in 0..8000 {
            counts[agent.act(&[1.0, 0.0, 0.0], s, &mut rng).unwrap().0] += 1;
        }
        assert!(counts.iter().all(|c| (1800..2200).contains(c)), "{counts:?}");

        let cfg = DqnConfig { eps_start: 0.0, eps_end: 0.0, ..small(10) };
        let mut agent = DqnAgent::new(cfg, 3, 4, &mut rng).unwrap();
        let n = agent.online.num_params();
        let bias_of_action2 = n - 4 + 2;
        agent.online.params_mut()[bias_of_action2] += 100.0;
        for s in 0..50 {
            assert_eq!(agent.act(&[0.0, 1.0, 0.0], s, &mut rng).unwrap(), ActionId(2));
        }
    }

    #[test]
    fn terminal_batch_regresses_to_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = DqnConfig { learning_rate: 1e-2, ..small(10) };
        let mut agent = DqnAgent::new(cfg, 2, 2, &mut rng).unwrap();
        agent.remember(tr(&[1.0, 0.0], 0, 0.7, true));
        agent.remember(tr(&[0.0, 1.0], 1, -0.4, true));
        for _ in 0..3000 {
            agent.update_on(&[0, 1]).unwrap();
        }
        assert!((agent.q_values(&[1.0, 0.0]).unwrap()[0] - 0.7).abs() < 1e-2);
        assert!((agent.q_values(&[0.0, 1.0]).unwrap()[1] + 0.4).abs() < 1e-2);
    }

    #[test]
    fn bootstraps_through_the_target_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = DqnConfig { gamma: 0.5, learning_rate: 1e-2, ..small(10) };
        let mut agent = DqnAgent::new(cfg, 2, 1, &mut rng).unwrap();
        agent.remember(Transition {
            obs: SparseObs::new(&[1.0, 0.0]),
            action: 0,
            reward: 0.0,
            next_obs: SparseObs::new(&[0.0, 1.0]),
            terminal: false,
        });
        agent.remember(tr(&[0.0, 1.0], 0, 1.0, true));
        for i in 0..4000 {
            agent.update_on(&[0, 1]).unwrap();
            if i % 100 == 0 {
                agent.sync_target().unwrap();
            }
        }
        assert!((agent.q_values(&[1.0, 0.0]).unwrap()[0] - 0.5).abs() < 1e-2);
    }

    #[test]
    fn update_waits_for_learning_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = DqnConfig { learning_starts: 3, ..small(10) };
        let mut agent = DqnAgent::new(cfg, 2, 2, &mut rng).unwrap();
        agent.remember(tr(&[1.0, 0.0], 0, 1.0, true));
        assert_eq!(agent.update(&mut rng).unwrap(), None);
        agent.remember(tr(&[1.0, 0.0], 0, 1.0, true));
        agent.remember(tr(&[1.0, 0.0], 0, 1.0, true));
        assert!(agent.update(&mut rng).unwrap().is_some());
    }

    #[test]
    fn target_is_a_periodic_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = DqnConfig { target_update_interval: 3, train_freq: 1, learning_starts: 0, ..small(10) };
        let mut agent = DqnAgent::new(cfg, 2, 2, &mut rng).unwrap();
        agent.remember(tr(&[1.0, 0.0], 0, 1.0, true));
        for step in 1..=6 {
            agent.after_env_step(step, &mut rng).unwrap();
            let same = agent.online.params() == agent.target.params();
            assert_eq!(same, step % 3 == 0, "step {step}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(DqnAgent::new(DqnConfig { batch_size: 0, ..DqnConfig::default() }, 2, 2, &mut rng).is_err());
        assert!(DqnAgent::new(DqnConfig { gamma: 1.5, ..DqnConfig::default() }, 2, 2, &mut rng).is_err());
    }
}
