//! Twin Delayed DDPG: actor, twin critics with target copies, replay
//! memory, clipped double-Q targets and delayed policy updates.

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{row, AdamState, Mlp, NeuralError, OutputActivation};

#[derive(Debug, Error)]
pub enum Td3Error {
    #[error("{what} has {got} values, expected {expected}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("non-finite reward {0}")]
    NonFiniteReward(f64),
    #[error("replay memory holds {have} transitions, need {need}")]
    Insufficient { have: usize, need: usize },
    #[error("invalid TD3 config: {0}")]
    InvalidConfig(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("bad agent checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Config {
    pub gamma: f64,
    pub batch_size: usize,
    pub exploration_noise: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub tau: f64,
    pub policy_delay: u64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    /// Environment steps of uniform random actions before learning starts.
    pub warmup_steps: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 100,
            exploration_noise: 0.1,
            policy_noise: 0.2,
            noise_clip: 0.5,
            tau: 0.005,
            policy_delay: 2,
            learning_rate: 1e-3,
            hidden: vec![100, 100],
            replay_capacity: 100_000,
            warmup_steps: 1000,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<(), Td3Error> {
        let bad = |m: &str| Err(Td3Error::InvalidConfig(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need 0 < batch_size ≤ replay_capacity");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be at least 1");
        }
        if [self.exploration_noise, self.policy_noise, self.noise_clip]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("noise parameters must be finite and non-negative");
        }
        if !(self.learning_rate > 0.0) || self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("learning rate must be positive and hidden sizes non-zero");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// A sampled minibatch, one transition per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[Transition]) -> Self {
        let sd = items[0].state.len();
        let ad = items[0].action.len();
        let n = items.len();
        Self {
            states: Array2::from_shape_fn((n, sd), |(i, j)| items[i].state[j]),
            actions: Array2::from_shape_fn((n, ad), |(i, j)| items[i].action[j]),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states: Array2::from_shape_fn((n, sd), |(i, j)| items[i].next_state[j]),
            dones: items.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed-capacity ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<(), Td3Error> {
        let check = |what, got: usize, expected| {
            if got == expected {
                Ok(())
            } else {
                Err(Td3Error::Dimension { what, expected, got })
            }
        };
        check("state", t.state.len(), self.state_dim)?;
        check("next state", t.next_state.len(), self.state_dim)?;
        check("action", t.action.len(), self.action_dim)?;
        if !t.reward.is_finite() {
            return Err(Td3Error::NonFiniteReward(t.reward));
        }
        if self.len() < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.next_states.extend_from_slice(&t.next_state);
            self.rewards.push(t.reward);
            self.dones.push(t.done);
        } else {
            let (i, sd, ad) = (self.cursor, self.state_dim, self.action_dim);
            self.states[i * sd..(i + 1) * sd].copy_from_slice(&t.state);
            self.actions[i * ad..(i + 1) * ad].copy_from_slice(&t.action);
            self.next_states[i * sd..(i + 1) * sd].copy_from_slice(&t.next_state);
            self.rewards[i] = t.reward;
            self.dones[i] = t.done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Stored transition at storage slot `i`.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len() {
            return None;
        }
        let (sd, ad) = (self.state_dim, self.action_dim);
        Some(Transition {
            state: self.states[i * sd..(i + 1) * sd].to_vec(),
            action: self.actions[i * ad..(i + 1) * ad].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * sd..(i + 1) * sd].to_vec(),
            done: self.dones[i],
        })
    }

    /// `n` uniform draws with replacement (`n` may exceed the size).
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>, Td3Error> {
        if self.is_empty() {
            return Err(Td3Error::Insufficient { have: 0, need: 1 });
        }
        Ok((0..n).map(|_| rng.gen_range(0..self.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch, Td3Error> {
        let idx = self.sample_indices(n, rng)?;
        let (sd, ad) = (self.state_dim, self.action_dim);
        Ok(Batch {
            states: Array2::from_shape_fn((n, sd), |(r, c)| self.states[idx[r] * sd + c]),
            actions: Array2::from_shape_fn((n, ad), |(r, c)| self.actions[idx[r] * ad + c]),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            next_states: Array2::from_shape_fn((n, sd), |(r, c)| self.next_states[idx[r] * sd + c]),
            dones: idx.iter().map(|&i| if self.dones[i] { 1.0 } else { 0.0 }).collect(),
        })
    }
}

/// Diagnostics from one [`Td3Agent::update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    /// Mean Q₁(s, μ(s)) when the actor was updated.
    pub actor_objective: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    config: Td3Config,
    state_dim: usize,
    action_dim: usize,
    actor: Mlp,
    actor_target: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    critic1_target: Mlp,
    critic2_target: Mlp,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    updates: u64,
}

const AGENT_FORMAT: &str = "talrace-td3";
const AGENT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct AgentCheckpoint {
    format: String,
    version: u32,
    config: Td3Config,
    state_dim: usize,
    action_dim: usize,
    updates: u64,
    actor: Mlp,
    actor_target: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    critic1_target: Mlp,
    critic2_target: Mlp,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        config: Td3Config,
        rng: &mut R,
    ) -> Result<Self, Td3Error> {
        config.validate()?;
        let actor = Mlp::new(&layer_sizes(state_dim, &config.hidden, action_dim), OutputActivation::Tanh, rng);
        let critic_sizes = layer_sizes(state_dim + action_dim, &config.hidden, 1);
        let critic1 = Mlp::new(&critic_sizes, OutputActivation::Identity, rng);
        let critic2 = Mlp::new(&critic_sizes, OutputActivation::Identity, rng);
        Self::from_networks(actor, critic1, critic2, config)
    }

    /// Builds an agent from explicit networks; targets start as copies.
    pub fn from_networks(actor: Mlp, critic1: Mlp, critic2: Mlp, config: Td3Config) -> Result<Self, Td3Error> {
        config.validate()?;
        let state_dim = actor.input_size();
        let action_dim = actor.output_size();
        for c in [&critic1, &critic2] {
            if c.input_size() != state_dim + action_dim || c.output_size() != 1 {
                return Err(Td3Error::InvalidConfig(format!(
                    "critic sizes {:?} do not fit actor sizes {:?}",
                    c.sizes(),
                    actor.sizes()
                )));
            }
        }
        if critic1.sizes() != critic2.sizes() {
            return Err(NeuralError::ArchitectureMismatch(critic1.sizes().to_vec(), critic2.sizes().to_vec()).into());
        }
        let lr = config.learning_rate;
        Ok(Self {
            actor_opt: AdamState::new(actor.num_params(), lr),
            critic1_opt: AdamState::new(critic1.num_params(), lr),
            critic2_opt: AdamState::new(critic2.num_params(), lr),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            config,
            state_dim,
            action_dim,
            updates: 0,
        })
    }

    pub fn config(&self) -> &Td3Config {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critics(&self) -> (&Mlp, &Mlp) {
        (&self.critic1, &self.critic2)
    }

    pub fn critic_targets(&self) -> (&Mlp, &Mlp) {
        (&self.critic1_target, &self.critic2_target)
    }

    /// `μ(state)`, plus Gaussian exploration noise when `explore`, clamped
    /// to [−1, 1].
    pub fn select_action<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<Vec<f64>, Td3Error> {
        let mut a = self.actor.forward(state)?;
        if explore && self.config.exploration_noise > 0.0 {
            let normal = Normal::new(0.0, self.config.exploration_noise).expect("valid sigma");
            for v in a.iter_mut() {
                *v += normal.sample(rng);
            }
        }
        for v in a.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    /// Target smoothing noise, clipped to `±noise_clip`, one row per sample.
    pub fn smoothing_noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let c = self.config.noise_clip;
        if self.config.policy_noise == 0.0 {
            return Array2::zeros((n, self.action_dim));
        }
        let normal = Normal::new(0.0, self.config.policy_noise).expect("valid sigma");
        Array2::from_shape_fn((n, self.action_dim), |_| normal.sample(rng).clamp(-c, c))
    }

    fn q_values(critic: &Mlp, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>, Td3Error> {
        let sa = concatenate![Axis(1), states, actions];
        Ok(critic.forward_batch(sa.view())?.column(0).to_owned())
    }

    /// Clipped double-Q targets with the given (already clipped) smoothing
    /// noise.
    pub fn compute_targets_with(&self, batch: &Batch, noise: &Array2<f64>) -> Result<Array1<f64>, Td3Error> {
        let mut next_a = self.actor_target.forward_batch(batch.next_states.view())? + noise;
        next_a.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        let q1 = Self::q_values(&self.critic1_target, batch.next_states.view(), next_a.view())?;
        let q2 = Self::q_values(&self.critic2_target, batch.next_states.view(), next_a.view())?;
        let gamma = self.config.gamma;
        Ok(Array1::from_shape_fn(batch.len(), |j| {
            let q = q1[j].min(q2[j]);
            if batch.dones[j] == 1.0 || gamma == 0.0 {
                batch.rewards[j]
            } else {
                batch.rewards[j] + gamma * (1.0 - batch.dones[j]) * q
            }
        }))
    }

    pub fn compute_targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Array1<f64>, Td3Error> {
        let noise = self.smoothing_noise(batch.len(), rng);
        self.compute_targets_with(batch, &noise)
    }

    fn critic_step(
        critic: &mut Mlp,
        opt: &mut AdamState,
        batch: &Batch,
        y: &Array1<f64>,
    ) -> Result<f64, Td3Error> {
        let sa = concatenate![Axis(1), batch.states.view(), batch.actions.view()];
        let cache = critic.forward_cached(sa.view())?;
        let n = batch.len() as f64;
        let diff = &cache.output().column(0) - y;
        let loss = diff.mapv(|d| d * d).sum() / n;
        if !loss.is_finite() {
            return Err(Td3Error::NonFinite(format!("critic loss {loss}")));
        }
        let grad_out = diff.mapv(|d| 2.0 * d / n).insert_axis(Axis(1));
        let (grads, _) = critic.backward(&cache, grad_out.view());
        opt.step(critic.params_mut(), &grads)?;
        Ok(loss)
    }

    /// One learning step on `batch` with fixed smoothing noise.
    pub fn update_with(&mut self, batch: &Batch, noise: &Array2<f64>) -> Result<UpdateInfo, Td3Error> {
        let y = self.compute_targets_with(batch, noise)?;
        let critic1_loss = Self::critic_step(&mut self.critic1, &mut self.critic1_opt, batch, &y)?;
        let critic2_loss = Self::critic_step(&mut self.critic2, &mut self.critic2_opt, batch, &y)?;
        self.updates += 1;
        let mut actor_objective = None;
        if self.updates % self.config.policy_delay == 0 {
            let n = batch.len() as f64;
            let actor_cache = self.actor.forward_cached(batch.states.view())?;
            let sa = concatenate![Axis(1), batch.states.view(), actor_cache.output().view()];
            let critic_cache = self.critic1.forward_cached(sa.view())?;
            let objective = critic_cache.output().sum() / n;
            if !objective.is_finite() {
                return Err(Td3Error::NonFinite(format!("actor objective {objective}")));
            }
            // ascend the objective: descend its negation
            let grad_q = Array2::from_elem((batch.len(), 1), -1.0 / n);
            let (_, grad_in) = self.critic1.backward(&critic_cache, grad_q.view());
            let grad_a = grad_in.slice(s![.., self.state_dim..]).to_owned();
            let (grads, _) = self.actor.backward(&actor_cache, grad_a.view());
            self.actor_opt.step(self.actor.params_mut(), &grads)?;
            let tau = self.config.tau;
            self.actor_target.soft_update(&self.actor, tau)?;
            self.critic1_target.soft_update(&self.critic1, tau)?;
            self.critic2_target.soft_update(&self.critic2, tau)?;
            actor_objective = Some(objective);
        }
        if !(self.actor.is_finite() && self.critic1.is_finite() && self.critic2.is_finite()) {
            return Err(Td3Error::NonFinite("network parameters after update".into()));
        }
        Ok(UpdateInfo {
            critic1_loss,
            critic2_loss,
            actor_objective,
        })
    }

    /// Samples a batch and smoothing noise from `rng`, then learns.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<UpdateInfo, Td3Error> {
        if buffer.len() < self.config.batch_size {
            return Err(Td3Error::Insufficient {
                have: buffer.len(),
                need: self.config.batch_size,
            });
        }
        let batch = buffer.sample(self.config.batch_size, rng)?;
        let noise = self.smoothing_noise(batch.len(), rng);
        self.update_with(&batch, &noise)
    }

    /// Deterministic action for a single observation.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>, Td3Error> {
        let a = self.actor.forward_batch(row(state))?;
        Ok(a.row(0).iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&AgentCheckpoint {
            format: AGENT_FORMAT.into(),
            version: AGENT_VERSION,
            config: self.config.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            updates: self.updates,
            actor: self.actor.clone(),
            actor_target: self.actor_target.clone(),
            critic1: self.critic1.clone(),
            critic2: self.critic2.clone(),
            critic1_target: self.critic1_target.clone(),
            critic2_target: self.critic2_target.clone(),
        })
        .expect("serializable")
    }

    /// Restores networks, hyperparameters and the update counter. Optimiser
    /// moments start fresh.
    pub fn from_json(text: &str) -> Result<Self, Td3Error> {
        let ck: AgentCheckpoint = serde_json::from_str(text).map_err(|e| Td3Error::Checkpoint(e.to_string()))?;
        if ck.format != AGENT_FORMAT || ck.version != AGENT_VERSION {
            return Err(Td3Error::Checkpoint(format!("unsupported format {} v{}", ck.format, ck.version)));
        }
        for net in [&ck.actor, &ck.actor_target, &ck.critic1, &ck.critic2, &ck.critic1_target, &ck.critic2_target] {
            net.validate()?;
        }
        if ck.actor.sizes() != ck.actor_target.sizes()
            || ck.critic1.sizes() != ck.critic1_target.sizes()
            || ck.critic2.sizes() != ck.critic2_target.sizes()
        {
            return Err(Td3Error::Checkpoint("target architecture differs from model".into()));
        }
        let mut agent = Self::from_networks(ck.actor, ck.critic1, ck.critic2, ck.config)?;
        if agent.state_dim != ck.state_dim || agent.action_dim != ck.action_dim {
            return Err(Td3Error::Checkpoint("declared dimensions do not match networks".into()));
        }
        agent.actor_target = ck.actor_target;
        agent.critic1_target = ck.critic1_target;
        agent.critic2_target = ck.critic2_target;
        agent.updates = ck.updates;
        Ok(agent)
    }

    pub fn save(&self, path: &Path) -> Result<(), Td3Error> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Td3Error> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
