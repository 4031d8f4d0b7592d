//! Clipped-surrogate PPO with a shared trunk: the network outputs the
//! action logits followed by one state value.

use confound_core::fpomdp::ActionId;
use confound_nn::loss::{clip_grad_norm, clipped_surrogate, entropy, entropy_logit_grad, log_softmax, softmax};
use confound_nn::{Adam, Head, Mlp};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::StackedEnv;
use crate::error::{AgentError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub n_steps: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub clip_range: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            n_steps: 128,
            epochs: 3,
            minibatch_size: 32,
            clip_range: 0.1,
            ent_coef: 0.01,
            vf_coef: 1.0,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 2.5e-4,
            max_grad_norm: 0.5,
            hidden: vec![128, 128],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if self.n_steps == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("rollout length, epochs and minibatch size must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if self.clip_range <= 0.0 || self.learning_rate <= 0.0 || self.max_grad_norm <= 0.0 {
            return bad("clip range, learning rate and gradient clip must be positive");
        }
        Ok(())
    }
}

/// One on-policy batch with its advantage estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub obs_len: usize,
    /// Row-major `len × obs_len`.
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub logprobs: Vec<f64>,
    /// Rewards, with `γ·V(last obs)` folded in at time-limit cut-offs.
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// The episode ended after this step.
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episode_returns: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_len..(i + 1) * self.obs_len]
    }

    /// Generalized advantage estimates; `last_value` is the value of the
    /// observation following the final step. Sets `returns = A + V`.
    pub fn compute_gae(&mut self, last_value: f64, gamma: f64, lambda: f64) {
        let n = self.len();
        self.advantages = vec![0.0; n];
        let mut acc = 0.0;
        for t in (0..n).rev() {
            let live = if self.dones[t] { 0.0 } else { 1.0 };
            let next_v = if t + 1 == n { last_value } else { self.values[t + 1] };
            let delta = self.rewards[t] + gamma * next_v * live - self.values[t];
            acc = delta + gamma * lambda * live * acc;
            self.advantages[t] = acc;
        }
        self.returns = self.advantages.iter().zip(&self.values).map(|(a, v)| a + v).collect();
    }

    /// Shifts and scales the advantages to zero mean and unit deviation.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt() + 1e-8;
        self.advantages.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    }
}

/// Losses of one minibatch at the current parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MinibatchStats {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Largest `|ratio − 1|` in the minibatch.
    pub max_ratio_deviation: f64,
}

/// Means over all minibatches of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Largest `|ratio − 1|` over the first epoch's first minibatch.
    pub initial_ratio_deviation: f64,
}

pub struct PpoAgent {
    cfg: PpoConfig,
    net: Mlp,
    opt: Adam,
    num_actions: usize,
    grads: Vec<f64>,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(cfg: PpoConfig, obs_len: usize, num_actions: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![obs_len];
        sizes.extend(&cfg.hidden);
        sizes.push(num_actions + 1);
        let mut net = Mlp::orthogonal(&sizes, Head::Linear, 2f64.sqrt(), 1.0, rng)?;
        net.scale_output_columns(0..num_actions, 0.01);
        let opt = Adam::new(net.num_params(), cfg.learning_rate);
        Ok(PpoAgent { grads: vec![0.0; net.num_params()], cfg, net, opt, num_actions })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Action probabilities and state value for one observation.
    pub fn evaluate(&self, obs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let out = self.net.predict(obs)?;
        Ok((softmax(&out[..self.num_actions]), out[self.num_actions]))
    }

    pub fn policy_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(obs)?.0)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.evaluate(obs)?.1)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<ActionId> {
        Ok(ActionId(sample_categorical(&self.policy_probs(obs)?, rng)))
    }

    /// Most probable action, lowest index on ties.
    pub fn greedy(&self, obs: &[f64]) -> Result<ActionId> {
        Ok(ActionId(crate::dqn::argmax(&self.policy_probs(obs)?)))
    }

    /// Collects `n_steps` transitions, carrying the episode state across
    /// calls, and computes the advantages (unnormalized).
    pub fn rollout<R: Rng + ?Sized>(&self, env: &mut StackedEnv, rng: &mut R) -> Result<Rollout> {
        let n = self.cfg.n_steps;
        let w = env.obs_len();
        if w != self.net.input_size() {
            return Err(AgentError::Width { expected: self.net.input_size(), got: w });
        }
        let mut r = Rollout {
            obs_len: w,
            obs: Vec::with_capacity(n * w),
            actions: Vec::with_capacity(n),
            logprobs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            advantages: Vec::new(),
            returns: Vec::new(),
            episode_returns: Vec::new(),
        };
        for _ in 0..n {
            let obs = env.obs().to_vec();
            let out = self.net.predict(&obs)?;
            let logits = &out[..self.num_actions];
            let a = sample_categorical(&softmax(logits), rng);
            let step = env.step(ActionId(a))?;
            let mut reward = step.reward;
            if step.truncated {
                reward += self.cfg.gamma * self.value(&step.next_obs)?;
            }
            r.obs.extend_from_slice(&obs);
            r.actions.push(a);
            r.logprobs.push(log_softmax(logits)[a]);
            r.rewards.push(reward);
            r.values.push(out[self.num_actions]);
            r.dones.push(step.done());
            r.episode_returns.extend(step.episode_return);
        }
        let last_value = self.value(env.obs())?;
        r.compute_gae(last_value, self.cfg.gamma, self.cfg.gae_lambda);
        Ok(r)
    }

    /// Losses on `idx` and, when `grads` is given, their gradient
    /// (accumulated) for `loss = −surrogate + vf·MSE − ent·H`.
    pub fn minibatch(&self, batch: &Rollout, idx: &[usize], grads: Option<&mut [f64]>) -> Result<MinibatchStats> {
        let m = idx.len();
        let (w, na) = (batch.obs_len, self.num_actions);
        let k = na + 1;
        let mut x = Vec::with_capacity(m * w);
        for &i in idx {
            x.extend_from_slice(batch.obs_row(i));
        }
        let acts = self.net.forward(&x, m)?;
        let out = acts.output();
        let mut d_out = vec![0.0; m * k];
        let mut st = MinibatchStats::default();
        let inv = 1.0 / m as f64;
        for (row, &i) in idx.iter().enumerate() {
            let o = &out[row * k..(row + 1) * k];
            let lp = log_softmax(&o[..na]);
            let p = softmax(&o[..na]);
            let a = batch.actions[i];
            let ratio = (lp[a] - batch.logprobs[i]).exp();
            let (s, ds) = clipped_surrogate(ratio, batch.advantages[i], self.cfg.clip_range);
            let h = entropy(&p);
            let verr = o[na] - batch.returns[i];
            st.surrogate += s * inv;
            st.value_loss += verr * verr * inv;
            st.entropy += h * inv;
            st.max_ratio_deviation = st.max_ratio_deviation.max((ratio - 1.0).abs());
            let dh = entropy_logit_grad(&p);
            let d = &mut d_out[row * k..(row + 1) * k];
            for j in 0..na {
                let onehot = if j == a { 1.0 } else { 0.0 };
                d[j] = -ds * ratio * (onehot - p[j]) * inv - self.cfg.ent_coef * dh[j] * inv;
            }
            d[na] = 2.0 * self.cfg.vf_coef * verr * inv;
        }
        if let Some(g) = grads {
            self.net.backward(&x, &acts, &d_out, g)?;
        }
        Ok(st)
    }

    /// Normalizes the advantages, then runs the configured epochs of
    /// shuffled minibatch Adam steps.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &mut Rollout, rng: &mut R) -> Result<PpoStats> {
        batch.normalize_advantages();
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut stats = PpoStats::default();
        let mut count = 0usize;
        for epoch in 0..self.cfg.epochs {
            order.shuffle(rng);
            for (mb, idx) in order.chunks(self.cfg.minibatch_size).enumerate() {
                let mut grads = std::mem::take(&mut self.grads);
                grads.iter_mut().for_each(|g| *g = 0.0);
                let st = self.minibatch(batch, idx, Some(&mut grads))?;
                clip_grad_norm(&mut grads, self.cfg.max_grad_norm);
                self.opt.step(self.net.params_mut(), &grads)?;
                self.grads = grads;
                if epoch == 0 && mb == 0 {
                    stats.initial_ratio_deviation = st.max_ratio_deviation;
                }
                stats.policy_loss -= st.surrogate;
                stats.value_loss += st.value_loss;
                stats.entropy += st.entropy;
                count += 1;
            }
        }
        let c = count.max(1) as f64;
        stats.policy_loss /= c;
        stats.value_loss /= c;
        stats.entropy /= c;
        Ok(stats)
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Trains for at least `total_steps` environment steps in whole rollouts.
/// `hook` runs before the first rollout with 0 and after each update with
/// the number of steps taken.
pub fn train_ppo<R, F>(agent: &mut PpoAgent, env: &mut StackedEnv, total_steps: usize, rng: &mut R, mut hook: F) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &PpoAgent) -> Result<()>,
{
    hook(0, agent)?;
    let mut steps = 0;
    while steps < total_steps {
        let mut batch = agent.rollout(env, rng)?;
        agent.update(&mut batch, rng)?;
        steps += batch.len();
        hook(steps, agent)?;
    }
    Ok(())
}
