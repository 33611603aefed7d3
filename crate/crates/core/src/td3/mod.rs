//! Self-contained TD3 learner: twin critics with targets, a delayed
//! deterministic actor bounded to the unit cube, experience replay, Adam,
//! and the continuous-to-discrete action mapping.
//!
//! Batched gradient math runs through [`crate::par`], so the `parallel`
//! feature fans per-sample work out over rayon while keeping the summation
//! order (and therefore every bit of every parameter) fixed.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod replay;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub use adam::AdamState;
pub use mlp::{soft_update, Mlp, MlpGrads, OutputActivation};
pub use replay::{ReplayBuffer, Transition};

/// TD3 hyperparameters. Defaults follow the evaluation setup: myopic
/// discount, small soft updates, learning from step 500 with delayed policy
/// updates, and canonical smoothing/exploration noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Td3Config {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch: usize,
    pub learning_starts: usize,
    pub policy_delay: usize,
    pub target_noise_sigma: f64,
    pub target_noise_clip: f64,
    pub exploration_sigma: f64,
    /// Hidden-layer widths of actor and critics.
    pub hidden: (usize, usize),
    pub replay_capacity: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            gamma: 0.2,
            tau: 0.005,
            lr: 3e-4,
            batch: 256,
            learning_starts: 500,
            policy_delay: 2,
            target_noise_sigma: 0.2,
            target_noise_clip: 0.5,
            exploration_sigma: 0.1,
            hidden: (400, 300),
            replay_capacity: 1_000_000,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let ensure = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.into()))
            }
        };
        ensure(self.gamma > 0.0 && self.gamma < 1.0, "gamma must lie in (0, 1)")?;
        ensure(self.tau > 0.0 && self.tau <= 1.0, "tau must lie in (0, 1]")?;
        ensure(self.lr > 0.0, "lr must be positive")?;
        ensure(self.batch >= 1, "batch must be at least 1")?;
        ensure(self.policy_delay >= 1, "policy_delay must be at least 1")?;
        ensure(self.target_noise_sigma >= 0.0, "target_noise_sigma must be non-negative")?;
        ensure(self.target_noise_clip >= 0.0, "target_noise_clip must be non-negative")?;
        ensure(self.exploration_sigma >= 0.0, "exploration_sigma must be non-negative")?;
        ensure(self.hidden.0 >= 1 && self.hidden.1 >= 1, "hidden sizes must be positive")?;
        ensure(self.replay_capacity >= self.batch, "replay capacity must cover one batch")?;
        Ok(())
    }
}

/// Map a continuous action in the unit cube to sleep-mode levels:
/// `round(c * H)`, half away from zero.
pub fn discretize(cont: &[f64], deepest: usize) -> Vec<usize> {
    cont.iter()
        .map(|&c| {
            debug_assert!((0.0..=1.0).contains(&c));
            ((c * deepest as f64).round() as i64).clamp(0, deepest as i64) as usize
        })
        .collect()
}

/// Bootstrap target for one transition: `r + gamma * (1 - done) * q_min`.
pub fn td_target(reward: f64, done: bool, min_target_q: f64, gamma: f64) -> f64 {
    reward + gamma * (1.0 - done as u8 as f64) * min_target_q
}

/// Mean-squared-error loss and gradients of a critic over a batch,
/// regressing `Q(obs, action)` onto per-sample targets.
pub fn critic_batch_loss_grads(critic: &Mlp, inputs: &[Vec<f64>], targets: &[f64]) -> (f64, MlpGrads) {
    assert_eq!(inputs.len(), targets.len());
    let b = inputs.len() as f64;
    let (loss_sum, grads) = par::fold_chunks(
        inputs.len(),
        par::GRAD_CHUNK,
        || (0.0f64, MlpGrads::zeros_like(critic)),
        |(loss, grads), i| {
            let cache = critic.forward_cached(&inputs[i]);
            let diff = cache.y[0] - targets[i];
            *loss += diff * diff;
            critic.backward(&cache, &[2.0 * diff / b], grads);
        },
        |(loss, grads), (loss2, grads2)| {
            *loss += loss2;
            grads.add_assign(&grads2);
        },
    )
    .expect("non-empty batch");
    (loss_sum / b, grads)
}

/// Deterministic policy-gradient loss `-mean Q(obs, actor(obs))` and its
/// gradient with respect to the actor parameters only.
pub fn actor_batch_loss_grads(actor: &Mlp, critic: &Mlp, obs: &[Vec<f64>]) -> (f64, MlpGrads) {
    let b = obs.len() as f64;
    let (loss_sum, grads) = par::fold_chunks(
        obs.len(),
        par::GRAD_CHUNK,
        || (0.0f64, MlpGrads::zeros_like(actor)),
        |(loss, grads), i| {
            let s = &obs[i];
            let actor_cache = actor.forward_cached(s);
            let mut input = Vec::with_capacity(s.len() + actor_cache.y.len());
            input.extend_from_slice(s);
            input.extend_from_slice(&actor_cache.y);
            let critic_cache = critic.forward_cached(&input);
            *loss -= critic_cache.y[0];
            let dl_dinput = critic.backward_input_only(&critic_cache, &[-1.0 / b]);
            actor.backward(&actor_cache, &dl_dinput[s.len()..], grads);
        },
        |(loss, grads), (loss2, grads2)| {
            *loss += loss2;
            grads.add_assign(&grads2);
        },
    )
    .expect("non-empty batch");
    (loss_sum / b, grads)
}

/// Losses observed during one [`Td3Agent::update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub actor_loss: Option<f64>,
}

/// The full learner: six networks, three optimizers, a replay ring, and a
/// private random stream for exploration and sampling.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub opt_actor: AdamState,
    pub opt_critic1: AdamState,
    pub opt_critic2: AdamState,
    pub replay: ReplayBuffer,
    pub config: Td3Config,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Environment steps observed so far.
    pub total_steps: u64,
    /// Critic gradient steps taken so far.
    pub critic_updates: u64,
    rng: ChaCha8Rng,
}

impl Td3Agent {
    pub fn new(obs_dim: usize, action_dim: usize, config: Td3Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h1, h2) = config.hidden;
        let actor = Mlp::new(&[obs_dim, h1, h2, action_dim], OutputActivation::TanhUnit, &mut rng);
        let critic1 = Mlp::new(&[obs_dim + action_dim, h1, h2, 1], OutputActivation::Linear, &mut rng);
        let critic2 = Mlp::new(&[obs_dim + action_dim, h1, h2, 1], OutputActivation::Linear, &mut rng);
        Ok(Td3Agent {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            opt_actor: AdamState::new(&actor),
            opt_critic1: AdamState::new(&critic1),
            opt_critic2: AdamState::new(&critic2),
            replay: ReplayBuffer::new(config.replay_capacity),
            actor,
            critic1,
            critic2,
            config,
            obs_dim,
            action_dim,
            total_steps: 0,
            critic_updates: 0,
            rng,
        })
    }

    /// Pick a continuous action in the unit cube. During exploration the
    /// first `learning_starts` steps are uniform, then Gaussian noise is
    /// added to the policy output; greedy selection is the bare policy.
    pub fn select_action(&mut self, obs: &[f64], explore: bool) -> Vec<f64> {
        if explore && self.total_steps < self.config.learning_starts as u64 {
            return (0..self.action_dim).map(|_| self.rng.gen_range(0.0..1.0)).collect();
        }
        let mut action = self.actor.forward(obs);
        if explore && self.config.exploration_sigma > 0.0 {
            let noise = Normal::new(0.0, self.config.exploration_sigma).expect("finite sigma");
            for a in &mut action {
                *a = (*a + noise.sample(&mut self.rng)).clamp(0.0, 1.0);
            }
        }
        action
    }

    /// Record one environment step.
    pub fn observe(&mut self, transition: Transition) {
        debug_assert_eq!(transition.obs.len(), self.obs_dim);
        debug_assert_eq!(transition.action.len(), self.action_dim);
        self.replay.push(transition);
        self.total_steps += 1;
    }

    pub fn ready_to_update(&self) -> bool {
        self.total_steps >= self.config.learning_starts as u64 && self.replay.len() >= self.config.batch
    }

    /// Smoothed bootstrap targets for a batch: the target actor proposes
    /// next actions, clipped noise perturbs them, and the pessimistic
    /// target critic pair scores them.
    pub fn batch_targets(&self, samples: &[Transition], noises: &[Vec<f64>]) -> Vec<f64> {
        assert_eq!(samples.len(), noises.len());
        let gamma = self.config.gamma;
        let items: Vec<(usize, &Transition)> = samples.iter().enumerate().collect();
        par::map_collect(&items, |&(i, t)| {
            let mut next_action = self.actor_target.forward(&t.next_obs);
            for (a, n) in next_action.iter_mut().zip(&noises[i]) {
                *a = (*a + n).clamp(0.0, 1.0);
            }
            let mut input = Vec::with_capacity(t.next_obs.len() + next_action.len());
            input.extend_from_slice(&t.next_obs);
            input.extend_from_slice(&next_action);
            let q1 = self.critic1_target.forward(&input)[0];
            let q2 = self.critic2_target.forward(&input)[0];
            td_target(t.reward, t.done, q1.min(q2), gamma)
        })
    }

    /// One gradient step: regress both critics onto smoothed targets, and
    /// every `policy_delay`-th call also update the actor and soft-update
    /// all targets. No-op until learning starts.
    pub fn update(&mut self) -> Result<Option<UpdateStats>> {
        if !self.ready_to_update() {
            return Ok(None);
        }
        let batch = self.config.batch;
        let indices = self.replay.sample_indices(batch, &mut self.rng);
        let samples: Vec<Transition> = indices.iter().map(|&i| self.replay.get(i).clone()).collect();

        // All randomness is drawn sequentially up front; the batched math
        // below is pure.
        let clip = self.config.target_noise_clip;
        let noise = Normal::new(0.0, self.config.target_noise_sigma).expect("finite sigma");
        let noises: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                (0..self.action_dim)
                    .map(|_| noise.sample(&mut self.rng).clamp(-clip, clip))
                    .collect()
            })
            .collect();

        let targets = self.batch_targets(&samples, &noises);
        let inputs: Vec<Vec<f64>> = samples
            .iter()
            .map(|t| {
                let mut x = Vec::with_capacity(t.obs.len() + t.action.len());
                x.extend_from_slice(&t.obs);
                x.extend_from_slice(&t.action);
                x
            })
            .collect();

        let (critic1_loss, grads1) = critic_batch_loss_grads(&self.critic1, &inputs, &targets);
        let (critic2_loss, grads2) = critic_batch_loss_grads(&self.critic2, &inputs, &targets);
        if !critic1_loss.is_finite() || !critic2_loss.is_finite() || !grads1.is_finite() || !grads2.is_finite() {
            return Err(Error::Training(format!(
                "non-finite critic losses at step {}: {critic1_loss}, {critic2_loss}",
                self.total_steps
            )));
        }
        self.opt_critic1.step(&mut self.critic1, &grads1, self.config.lr);
        self.opt_critic2.step(&mut self.critic2, &grads2, self.config.lr);
        self.critic_updates += 1;

        let mut actor_loss = None;
        if self.critic_updates.is_multiple_of(self.config.policy_delay as u64) {
            let obs: Vec<Vec<f64>> = samples.iter().map(|t| t.obs.clone()).collect();
            let (loss, actor_grads) = actor_batch_loss_grads(&self.actor, &self.critic1, &obs);
            if !loss.is_finite() || !actor_grads.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite actor loss at step {}: {loss}",
                    self.total_steps
                )));
            }
            self.opt_actor.step(&mut self.actor, &actor_grads, self.config.lr);
            soft_update(&mut self.actor_target, &self.actor, self.config.tau);
            soft_update(&mut self.critic1_target, &self.critic1, self.config.tau);
            soft_update(&mut self.critic2_target, &self.critic2, self.config.tau);
            actor_loss = Some(loss);
        }

        Ok(Some(UpdateStats {
            critic1_loss,
            critic2_loss,
            actor_loss,
        }))
    }
}
