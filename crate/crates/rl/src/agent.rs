//! DDPG agent: deterministic tanh actor, Q critic, target copies, replay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, RlError};
use crate::mlp::{Activation, Gradients, Mlp};
use crate::optim::Adam;
use crate::replay::{ReplayBuffer, Transition};

/// Per-dimension interval onto which the raw `[-1, 1]` action is mapped.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ActionBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(RlError::Shape(format!(
                "bounds need matching non-empty lo/hi, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (dim, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(RlError::Bounds { dim, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// `lo + (raw + 1)/2 · (hi − lo)`, with `raw` clipped to `[-1, 1]` first.
    pub fn scale(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&r, (&l, &h))| {
                let r = r.clamp(-1.0, 1.0);
                (l + (r + 1.0) * 0.5 * (h - l)).clamp(l, h)
            })
            .collect()
    }

    pub fn unscale(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&s, (&l, &h))| (2.0 * (s - l) / (h - l) - 1.0).clamp(-1.0, 1.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub bounds: ActionBounds,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub target_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub noise_std: f64,
    pub noise_decay: f64,
    pub noise_floor: f64,
    /// Multiplier on the initial weights of the actor's output layer.
    pub actor_output_scale: f64,
}

impl AgentConfig {
    /// DDPG defaults: 64-64 hidden layers, γ = 0.99, learning rate 1e-3,
    /// target rate 0.01, batch 64, buffer 10⁴, exploration σ = 0.3 decaying
    /// by 5e-5 per action down to 0.01.
    pub fn new(obs_dim: usize, bounds: ActionBounds) -> Self {
        Self {
            obs_dim,
            bounds,
            hidden: vec![64, 64],
            gamma: 0.99,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            target_rate: 0.01,
            batch_size: 64,
            buffer_capacity: 10_000,
            noise_std: 0.3,
            noise_decay: 5e-5,
            noise_floor: 0.01,
            actor_output_scale: 0.1,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.bounds.dim()
    }

    fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 {
            return Err(RlError::Shape("observation dimension must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(RlError::Shape("hidden layers must be non-empty".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(RlError::Shape("batch size and buffer capacity must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    /// Mean `Q(s, μ(s))` over the batch, evaluated before the actor step.
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    pub(crate) actor: Mlp,
    pub(crate) critic: Mlp,
    pub(crate) actor_target: Mlp,
    pub(crate) critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    noise_std: f64,
    rng: ChaCha8Rng,
}

pub(crate) fn actor_shape(config: &AgentConfig) -> (Vec<usize>, Vec<Activation>) {
    let mut sizes = vec![config.obs_dim];
    sizes.extend(&config.hidden);
    sizes.push(config.action_dim());
    let mut acts = vec![Activation::Relu; config.hidden.len()];
    acts.push(Activation::Tanh);
    (sizes, acts)
}

pub(crate) fn critic_shape(config: &AgentConfig) -> (Vec<usize>, Vec<Activation>) {
    let mut sizes = vec![config.obs_dim + config.action_dim()];
    sizes.extend(&config.hidden);
    sizes.push(1);
    let mut acts = vec![Activation::Relu; config.hidden.len()];
    acts.push(Activation::Identity);
    (sizes, acts)
}

/// Adds `N(0, std²)` to each raw component and clips to `[-1, 1]`.
pub fn perturb<R: Rng + ?Sized>(raw: &[f64], std: f64, rng: &mut R) -> Vec<f64> {
    if std <= 0.0 {
        return raw.to_vec();
    }
    let normal = Normal::new(0.0, std).expect("std is positive and finite");
    raw.iter().map(|&a| (a + normal.sample(rng)).clamp(-1.0, 1.0)).collect()
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

impl Agent {
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sizes, acts) = actor_shape(&config);
        let mut actor = Mlp::random(&sizes, &acts, &mut rng);
        let last = actor.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w *= config.actor_output_scale);
        last.bias.iter_mut().for_each(|b| *b *= config.actor_output_scale);
        let (sizes, acts) = critic_shape(&config);
        let critic = Mlp::random(&sizes, &acts, &mut rng);
        Ok(Self::from_parts(
            config,
            actor.clone(),
            critic.clone(),
            actor,
            critic,
            None,
            rng,
        ))
    }

    pub(crate) fn from_parts(
        config: AgentConfig,
        actor: Mlp,
        critic: Mlp,
        actor_target: Mlp,
        critic_target: Mlp,
        noise_std: Option<f64>,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            actor_opt: Adam::for_network(config.actor_lr, &actor),
            critic_opt: Adam::for_network(config.critic_lr, &critic),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            noise_std: noise_std.unwrap_or(config.noise_std),
            config,
            actor,
            critic,
            actor_target,
            critic_target,
            rng,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.config.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.config.action_dim()
    }

    pub fn bounds(&self) -> &ActionBounds {
        &self.config.bounds
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn set_noise_std(&mut self, std: f64) {
        self.noise_std = std;
    }

    /// Reseeds the agent's private stream (exploration and replay sampling).
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Greedy action: raw tanh output and its image on the bounds.
    pub fn act(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(RlError::NonFinite("observation"));
        }
        let raw = self.actor.forward(obs)?;
        let scaled = self.config.bounds.scale(&raw);
        Ok((raw, scaled))
    }

    /// Gaussian exploration on the raw action, then one multiplicative decay
    /// of σ (never below the floor).
    pub fn explore(&mut self, raw: &[f64]) -> Vec<f64> {
        let out = perturb(raw, self.noise_std, &mut self.rng);
        self.noise_std = (self.noise_std * (1.0 - self.config.noise_decay)).max(self.config.noise_floor);
        out
    }

    pub fn q_value(&self, obs: &[f64], raw_action: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(&concat(obs, raw_action))?[0])
    }

    pub fn remember(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim() || t.next_obs.len() != self.obs_dim() {
            return Err(RlError::Dimension {
                expected: self.obs_dim(),
                got: if t.obs.len() != self.obs_dim() {
                    t.obs.len()
                } else {
                    t.next_obs.len()
                },
            });
        }
        if t.action.len() != self.action_dim() {
            return Err(RlError::Dimension {
                expected: self.action_dim(),
                got: t.action.len(),
            });
        }
        self.buffer.push(t);
        Ok(())
    }

    /// One train step on a replay sample, or `None` while the buffer holds
    /// fewer transitions than a batch.
    pub fn learn(&mut self) -> Result<Option<TrainStats>> {
        let idx = match self.buffer.sample_indices(self.config.batch_size, &mut self.rng) {
            Ok(idx) => idx,
            Err(RlError::InsufficientExperience { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let batch: Vec<Transition> = idx.into_iter().map(|i| self.buffer.get(i).unwrap().clone()).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        self.train_step(&refs).map(Some)
    }

    /// Gradients of the critic's mean squared TD error.
    pub fn critic_gradient(&self, batch: &[&Transition]) -> Result<(Gradients, f64)> {
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut loss = 0.0;
        for t in batch {
            let next_action = self.actor_target.forward(&t.next_obs)?;
            let next_q = self.critic_target.forward(&concat(&t.next_obs, &next_action))?[0];
            let not_done = if t.terminal { 0.0 } else { 1.0 };
            let y = t.reward + self.config.gamma * not_done * next_q;
            let trace = self.critic.forward_trace(&concat(&t.obs, &t.action))?;
            let err = trace.output()[0] - y;
            loss += err * err;
            self.critic.backward_into(&trace, &[2.0 * err / n], &mut grads)?;
        }
        Ok((grads, loss / n))
    }

    /// Gradients of `−mean Q(s, μ(s))` with respect to the actor parameters,
    /// and the mean Q itself.
    pub fn actor_gradient(&self, batch: &[&Transition]) -> Result<(Gradients, f64)> {
        let n = batch.len() as f64;
        let obs_dim = self.obs_dim();
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut objective = 0.0;
        for t in batch {
            let actor_trace = self.actor.forward_trace(&t.obs)?;
            let action = actor_trace.output();
            let critic_trace = self.critic.forward_trace(&concat(&t.obs, action))?;
            objective += critic_trace.output()[0];
            let dinput = self.critic.input_gradient(&critic_trace, &[-1.0 / n])?;
            self.actor.backward_into(&actor_trace, &dinput[obs_dim..], &mut grads)?;
        }
        Ok((grads, objective / n))
    }

    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<TrainStats> {
        if batch.is_empty() {
            return Err(RlError::InsufficientExperience { available: 0, batch: 1 });
        }
        let (critic_grads, critic_loss) = self.critic_gradient(batch)?;
        if !critic_loss.is_finite() {
            return Err(RlError::Divergence(format!("critic loss {critic_loss}")));
        }
        self.critic_opt.step(&mut self.critic, &critic_grads);

        let (actor_grads, actor_objective) = self.actor_gradient(batch)?;
        if !actor_objective.is_finite() {
            return Err(RlError::Divergence(format!("actor objective {actor_objective}")));
        }
        self.actor_opt.step(&mut self.actor, &actor_grads);

        let rate = self.config.target_rate;
        self.actor_target.soft_update(&self.actor, rate)?;
        self.critic_target.soft_update(&self.critic, rate)?;
        if !(self.actor.is_finite() && self.critic.is_finite()) {
            return Err(RlError::Divergence("non-finite network parameters".into()));
        }
        Ok(TrainStats {
            critic_loss,
            actor_objective,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Dense;

    fn kp_bounds() -> ActionBounds {
        ActionBounds::new(vec![0.0, 0.0], vec![0.5, 0.1]).unwrap()
    }

    #[test]
    fn scaling_hits_bounds_and_midpoint() {
        let b = kp_bounds();
        assert_eq!(b.scale(&[-1.0, -1.0]), vec![0.0, 0.0]);
        assert_eq!(b.scale(&[1.0, 1.0]), vec![0.5, 0.1]);
        assert_eq!(b.scale(&[0.0, 0.0]), vec![0.25, 0.05]);
        let raw = b.unscale(&[0.125, 0.075]);
        assert!((raw[0] + 0.5).abs() < 1e-12 && (raw[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bounds_reject_empty_interval() {
        assert!(matches!(
            ActionBounds::new(vec![1.0], vec![1.0]),
            Err(RlError::Bounds { dim: 0, .. })
        ));
    }

    #[test]
    fn zero_noise_leaves_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(perturb(&[0.3, -0.7], 0.0, &mut rng), vec![0.3, -0.7]);
    }

    #[test]
    fn large_noise_clips_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let out = perturb(&[0.99], 1e6, &mut rng);
            assert!(out[0] == 1.0 || out[0] == -1.0);
        }
    }

    #[test]
    fn noise_decays_geometrically_to_floor() {
        let mut agent = Agent::new(AgentConfig::new(3, kp_bounds()), 1).unwrap();
        for n in 1..=1000u32 {
            agent.explore(&[0.0, 0.0]);
            let expected = (0.3 * (1.0 - 5e-5_f64).powi(n as i32)).max(0.01);
            assert!((agent.noise_std() - expected).abs() < 1e-12);
        }
        let mut cfg = AgentConfig::new(3, kp_bounds());
        cfg.noise_decay = 0.5;
        let mut fast = Agent::new(cfg, 1).unwrap();
        for _ in 0..20 {
            fast.explore(&[0.0, 0.0]);
        }
        assert_eq!(fast.noise_std(), 0.01);
    }

    #[test]
    fn targets_start_as_copies() {
        let agent = Agent::new(AgentConfig::new(8, kp_bounds()), 5).unwrap();
        assert_eq!(agent.actor(), agent.actor_target());
        assert_eq!(agent.critic(), agent.critic_target());
        assert_eq!(agent.actor().input_dim(), 8);
        assert_eq!(agent.actor().output_dim(), 2);
        assert_eq!(agent.critic().input_dim(), 10);
    }

    #[test]
    fn act_rejects_non_finite_observation() {
        let agent = Agent::new(AgentConfig::new(2, kp_bounds()), 5).unwrap();
        assert!(matches!(agent.act(&[f64::NAN, 0.0]), Err(RlError::NonFinite(_))));
    }

    fn transition(reward: f64) -> Transition {
        Transition {
            obs: vec![0.2, -0.4],
            action: vec![0.1, -0.3],
            reward,
            next_obs: vec![0.5, 0.1],
            terminal: false,
        }
    }

    #[test]
    fn exact_critic_with_zero_discount_does_not_move() {
        let mut cfg = AgentConfig::new(2, kp_bounds());
        cfg.gamma = 0.0;
        let mut agent = Agent::new(cfg, 2).unwrap();
        let last = agent.critic.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias[0] = -1.5;
        let critic_before = agent.critic.clone();
        let batch = vec![transition(-1.5); 8];
        let refs: Vec<&Transition> = batch.iter().collect();
        let stats = agent.train_step(&refs).unwrap();
        assert_eq!(stats.critic_loss, 0.0);
        assert_eq!(agent.critic, critic_before);
    }

    #[test]
    fn constant_critic_gives_zero_actor_gradient() {
        let mut agent = Agent::new(AgentConfig::new(2, kp_bounds()), 3).unwrap();
        let (sizes, _) = critic_shape(agent.config());
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == sizes.len() {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                let mut d = Dense::zeros(w[0], w[1], act);
                d.bias.iter_mut().for_each(|b| *b = 0.7);
                d
            })
            .collect();
        agent.critic = Mlp::new(layers).unwrap();
        let batch = vec![transition(0.0); 4];
        let refs: Vec<&Transition> = batch.iter().collect();
        let (grads, _) = agent.actor_gradient(&refs).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn learn_waits_for_a_full_batch() {
        let mut agent = Agent::new(AgentConfig::new(2, kp_bounds()), 4).unwrap();
        for _ in 0..63 {
            agent.remember(transition(0.0)).unwrap();
        }
        assert!(agent.learn().unwrap().is_none());
        agent.remember(transition(0.0)).unwrap();
        assert!(agent.learn().unwrap().is_some());
    }

    #[test]
    fn remember_checks_dimensions() {
        let mut agent = Agent::new(AgentConfig::new(3, kp_bounds()), 4).unwrap();
        assert!(agent.remember(transition(0.0)).is_err());
    }
}
