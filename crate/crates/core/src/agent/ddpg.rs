use crate::error::{Error, Result};
use crate::netmodel::{NormalizedState, STATE_DIM};
use crate::nncore::{loss, Activation, Checkpoint, Mlp, Optimizer, Parameterized, Tensor};
use crate::seed::{rng_for, Rng, RngState};

use super::buffer::{ReplayBuffer, Transition};
use super::noise::truncated_normal;

/// Hyperparameters of the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub baseline_decay: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub a_floor: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![300, 300],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 0.01,
            gamma: 1.0,
            baseline_decay: 0.95,
            batch_size: 64,
            buffer_capacity: 2000,
            a_floor: 0.05,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("invalid hidden sizes {:?}", self.hidden)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::domain("tau", self.tau, "(0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::domain("gamma", self.gamma, "[0, 1]"));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::domain("baseline_decay", self.baseline_decay, "[0, 1)"));
        }
        if !(self.a_floor > 0.0 && self.a_floor <= 1.0) {
            return Err(Error::domain("a_floor", self.a_floor, "(0, 1]"));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(Error::Config(format!(
                "batch_size {} must be in 1..={}",
                self.batch_size, self.buffer_capacity
            )));
        }
        Ok(())
    }
}

/// Diagnostics of one [`DdpgAgent::train_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    /// Mean `Q(s, mu(s))` over the batch, before the actor update.
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    config: AgentConfig,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    baseline: Option<f64>,
    buffer: ReplayBuffer,
    noise_rng: Rng,
    replay_rng: Rng,
}

fn rows(states: impl Iterator<Item = [f64; STATE_DIM]>, n: usize) -> Tensor {
    let data: Vec<f64> = states.flat_map(|s| s.into_iter()).collect();
    Tensor::from_vec(&[n, STATE_DIM], data).unwrap()
}

fn with_actions(states: &Tensor, actions: &[f64]) -> Tensor {
    let mut data = Vec::with_capacity(actions.len() * (STATE_DIM + 1));
    for (s, a) in states.data().chunks_exact(STATE_DIM).zip(actions) {
        data.extend_from_slice(s);
        data.push(*a);
    }
    Tensor::from_vec(&[actions.len(), STATE_DIM + 1], data).unwrap()
}

impl DdpgAgent {
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = rng_for(seed, "agent.init");
        let mut actor_sizes = vec![STATE_DIM];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(1);
        let mut critic_sizes = actor_sizes.clone();
        critic_sizes[0] = STATE_DIM + 1;
        let actor = Mlp::new(&actor_sizes, Activation::Relu, Activation::Sigmoid, 0.1, &mut init)?;
        let critic = Mlp::new(&critic_sizes, Activation::Relu, Activation::Identity, 1.0, &mut init)?;
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt: Optimizer::adam(config.actor_lr)?,
            critic_opt: Optimizer::adam(config.critic_lr)?,
            baseline: None,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            noise_rng: rng_for(seed, "agent.noise"),
            replay_rng: rng_for(seed, "agent.replay"),
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    /// Raw actor output in `(0, 1)`.
    pub fn policy_mean(&self, s: &NormalizedState) -> f64 {
        let input = Tensor::from_vec(&[STATE_DIM], s.0.to_vec()).unwrap();
        self.actor.forward(&input).expect("actor input width is fixed").data()[0]
    }

    /// Deterministic action, clamped into `[a_floor, 1]`.
    pub fn act(&self, s: &NormalizedState) -> f64 {
        self.policy_mean(s).clamp(self.config.a_floor, 1.0)
    }

    /// Truncated-normal exploration around the policy, clamped into `[a_floor, 1]`.
    pub fn explore(&mut self, s: &NormalizedState, sigma: f64) -> f64 {
        let mu = self.policy_mean(s);
        truncated_normal(mu, sigma, &mut self.noise_rng).clamp(self.config.a_floor, 1.0)
    }

    pub fn remember(&mut self, episode: impl IntoIterator<Item = Transition>, reward: f64) {
        self.buffer.remember(episode, reward);
    }

    /// `b <- decay * b + (1 - decay) * R`, starting from the first reward.
    pub fn update_baseline(&mut self, reward: f64) {
        let beta = self.config.baseline_decay;
        self.baseline = Some(match self.baseline {
            None => reward,
            Some(b) => beta * b + (1.0 - beta) * reward,
        });
    }

    /// Bootstrap targets `(r - b) + gamma * Q'(s', mu'(s'))`, the bootstrap
    /// term dropped on terminal transitions.
    pub fn critic_targets(&self, batch: &[&Transition], baseline: f64) -> Result<Vec<f64>> {
        let n = batch.len();
        let next = rows(batch.iter().map(|t| t.s_next.0), n);
        let next_actions = self.actor_target.forward(&next)?;
        let q_next = self.critic_target.forward(&with_actions(&next, next_actions.data()))?;
        Ok(batch
            .iter()
            .zip(q_next.data())
            .map(|(t, q)| {
                let bootstrap = if t.terminal { 0.0 } else { self.config.gamma * q };
                (t.r - baseline) + bootstrap
            })
            .collect())
    }

    /// One critic and one actor update on a uniform minibatch, then a soft
    /// update of both targets.
    pub fn train_step(&mut self) -> Result<TrainStats> {
        let n = self.config.batch_size;
        if self.buffer.len() < n {
            return Err(Error::Training(format!(
                "buffer holds {} transitions, batch needs {n}",
                self.buffer.len()
            )));
        }
        let batch: Vec<Transition> = self
            .buffer
            .sample(n, &mut self.replay_rng)?
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let targets = self.critic_targets(&refs, self.baseline.unwrap_or(0.0))?;
        let states = rows(batch.iter().map(|t| t.s.0), n);
        let actions: Vec<f64> = batch.iter().map(|t| t.a).collect();

        let (q, cache) = self.critic.forward_cached(&with_actions(&states, &actions))?;
        let (critic_loss, grad) = loss::mse(&q, &Tensor::from_vec(&[n, 1], targets)?)?;
        if !critic_loss.is_finite() {
            return Err(Error::Training(format!("critic loss is {critic_loss}")));
        }
        let (grads, _) = self.critic.backward(&cache, &grad)?;
        self.critic_opt.step(&mut self.critic, &grads)?;

        let (mu, actor_cache) = self.actor.forward_cached(&states)?;
        let (q_mu, critic_cache) = self.critic.forward_cached(&with_actions(&states, mu.data()))?;
        let actor_objective = q_mu.data().iter().sum::<f64>() / n as f64;
        if !actor_objective.is_finite() {
            return Err(Error::Training(format!("actor objective is {actor_objective}")));
        }
        let ascend = Tensor::from_vec(&[n, 1], vec![-1.0 / n as f64; n])?;
        let input_grad = self.critic.input_grad(&critic_cache, &ascend)?;
        let action_grad: Vec<f64> = input_grad
            .data()
            .chunks_exact(STATE_DIM + 1)
            .map(|row| row[STATE_DIM])
            .collect();
        let (grads, _) = self
            .actor
            .backward(&actor_cache, &Tensor::from_vec(&[n, 1], action_grad)?)?;
        self.actor_opt.step(&mut self.actor, &grads)?;

        self.soft_update_targets(self.config.tau)?;
        Ok(TrainStats {
            critic_loss,
            actor_objective,
        })
    }

    /// `theta' <- tau * theta + (1 - tau) * theta'` for both networks.
    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        self.actor_target.soft_update_from(&self.actor, tau)?;
        self.critic_target.soft_update_from(&self.critic, tau)
    }

    pub fn save(&self, ckpt: &mut Checkpoint) {
        self.actor.save_params(ckpt, "actor");
        self.critic.save_params(ckpt, "critic");
        self.actor_target.save_params(ckpt, "actor_target");
        self.critic_target.save_params(ckpt, "critic_target");
        save_optimizer(ckpt, "actor_opt", &self.actor_opt);
        save_optimizer(ckpt, "critic_opt", &self.critic_opt);
        self.buffer.save(ckpt, "buffer");
        match self.baseline {
            Some(b) => ckpt.put_meta("agent.baseline", b),
            None => ckpt.put_meta("agent.baseline", "none"),
        }
        ckpt.put_meta("agent.noise_rng", RngState::capture(&self.noise_rng).encode());
        ckpt.put_meta("agent.replay_rng", RngState::capture(&self.replay_rng).encode());
    }

    /// Restores the state written by [`save`](Self::save) into an agent
    /// built with the same configuration.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.actor.load_params(ckpt, "actor")?;
        self.critic.load_params(ckpt, "critic")?;
        self.actor_target.load_params(ckpt, "actor_target")?;
        self.critic_target.load_params(ckpt, "critic_target")?;
        load_optimizer(ckpt, "actor_opt", &mut self.actor_opt)?;
        load_optimizer(ckpt, "critic_opt", &mut self.critic_opt)?;
        self.buffer = ReplayBuffer::load(ckpt, "buffer")?;
        self.baseline = match ckpt.meta("agent.baseline") {
            Some("none") => None,
            _ => Some(ckpt.require_meta("agent.baseline")?),
        };
        let rng = |key: &str| -> Result<Rng> {
            ckpt.meta(key)
                .and_then(RngState::decode)
                .map(|s| s.restore())
                .ok_or_else(|| Error::Config(format!("checkpoint lacks a valid `{key}` entry")))
        };
        self.noise_rng = rng("agent.noise_rng")?;
        self.replay_rng = rng("agent.replay_rng")?;
        Ok(())
    }
}

fn save_optimizer(ckpt: &mut Checkpoint, prefix: &str, opt: &Optimizer) {
    let (steps, first, second) = opt.state();
    ckpt.put_meta(&format!("{prefix}.steps"), steps);
    ckpt.put_meta(&format!("{prefix}.slots"), first.len());
    for (i, (m, v)) in first.iter().zip(second).enumerate() {
        ckpt.put_tensor(
            &format!("{prefix}.m{i}"),
            Tensor::from_vec(&[m.len()], m.clone()).unwrap(),
        );
        ckpt.put_tensor(
            &format!("{prefix}.v{i}"),
            Tensor::from_vec(&[v.len()], v.clone()).unwrap(),
        );
    }
}

fn load_optimizer(ckpt: &Checkpoint, prefix: &str, opt: &mut Optimizer) -> Result<()> {
    let steps: u64 = ckpt.require_meta(&format!("{prefix}.steps"))?;
    let slots: usize = ckpt.require_meta(&format!("{prefix}.slots"))?;
    let mut first = Vec::with_capacity(slots);
    let mut second = Vec::with_capacity(slots);
    for i in 0..slots {
        first.push(ckpt.tensor(&format!("{prefix}.m{i}"))?.data().to_vec());
        second.push(ckpt.tensor(&format!("{prefix}.v{i}"))?.data().to_vec());
    }
    opt.restore_state(steps, first, second);
    Ok(())
}
