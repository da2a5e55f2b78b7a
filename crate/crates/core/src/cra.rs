//! The centralized reward agent.
//!
//! An actor maps a reward-agent state `s_rwd = (observation, one-hot
//! action)` to a squashed-Gaussian distribution over the reward space; a
//! state-value critic `V(s_rwd)` is regressed on environmental rewards.
//! The critic minimizes the mean squared TD error
//! `delta = r_env + gamma (1 - done) V_target(s'_rwd) - V(s_rwd)` and the
//! actor minimizes `-mean(log pi(r_knw | s_rwd) * delta)` with `delta`
//! held constant and `r_knw` freshly drawn through the reparameterized head.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::approximator::gaussian::{self, squash_log_std, squash_log_std_slope};
use crate::approximator::{adam_step, Activation, AdamState, Checkpoint, NetSpec, Network, ParamVector};
use crate::envsuite::{ActionId, Observation, ACTION_COUNT};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::replay::{reward_input, Transition};

pub use crate::approximator::RewardSpace;

/// Hyperparameters of the reward agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CraConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub gamma: f64,
    pub batch_size: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// The actor steps on every `actor_update_every`-th update call.
    pub actor_update_every: u64,
    pub tau: f64,
    pub burn_in: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Outer iterations between reward-agent updates.
    pub update_period: usize,
}

impl Default for CraConfig {
    fn default() -> Self {
        CraConfig {
            hidden: vec![128, 128],
            activation: Activation::Relu,
            gamma: 0.99,
            batch_size: 256,
            lr_actor: 3e-4,
            lr_critic: 1e-3,
            actor_update_every: 2,
            tau: 5e-3,
            burn_in: 5000,
            r_min: -1.0,
            r_max: 1.0,
            update_period: 1,
        }
    }
}

impl CraConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("cra: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.batch_size == 0 || self.actor_update_every == 0 || self.update_period == 0 {
            return bad("batch size, actor update frequency and update period must be >= 1".into());
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0, 1]", self.tau));
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be >= 1".into());
        }
        RewardSpace::new(self.r_min, self.r_max).map(|_| ())
    }

    pub fn reward_space<T: Float>(&self) -> RewardSpace<T> {
        RewardSpace { r_min: T::of(self.r_min), r_max: T::of(self.r_max) }
    }
}

/// How a knowledge reward is produced.
pub enum RewardMode<'a, R: ?Sized> {
    /// Draw from the squashed Gaussian.
    Sample(&'a mut R),
    /// Squashed mean, deterministic.
    Mean,
}

/// Read-only access to knowledge rewards during policy-agent updates.
pub trait KnowledgeSource<T>: Sync {
    /// Deterministic knowledge reward for every `(obs, action)` of the batch.
    fn mean_rewards(&self, batch: &[&Transition<T>]) -> Result<Vec<T>>;
}

/// Provides zero everywhere.
pub struct NoKnowledge;

impl<T: Float> KnowledgeSource<T> for NoKnowledge {
    fn mean_rewards(&self, batch: &[&Transition<T>]) -> Result<Vec<T>> {
        Ok(vec![T::zero(); batch.len()])
    }
}

/// Provides one fixed value everywhere.
pub struct ConstantKnowledge<T>(pub T);

impl<T: Float> KnowledgeSource<T> for ConstantKnowledge<T> {
    fn mean_rewards(&self, batch: &[&Transition<T>]) -> Result<Vec<T>> {
        Ok(vec![self.0; batch.len()])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticLoss<T> {
    pub loss: T,
    pub delta: Vec<T>,
    pub grad: ParamVector<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorLoss<T> {
    pub loss: T,
    pub grad: ParamVector<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CraDiagnostics {
    pub critic_loss: f64,
    /// Present on calls where the actor stepped.
    pub actor_loss: Option<f64>,
    pub mean_abs_delta: f64,
}

fn stack_inputs<T: Float>(batch: &[&Transition<T>], next: bool) -> Vec<T> {
    let mut out = Vec::new();
    for t in batch {
        if next {
            out.extend(reward_input(&t.next_obs, t.next_action));
        } else {
            out.extend(reward_input(&t.obs, t.action));
        }
    }
    out
}

fn check_finite<T: Float>(values: &[T], what: &'static str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::Numeric { what, index }),
        None => Ok(()),
    }
}

/// Mean squared TD error of `critic` with the bootstrap taken from `target`,
/// its per-item TD errors and its gradient with respect to `critic`.
pub fn critic_objective<T: Float>(
    critic: &Network<T>,
    target: &Network<T>,
    batch: &[&Transition<T>],
    gamma: T,
) -> Result<CriticLoss<T>> {
    if batch.is_empty() {
        return Err(Error::Usage("critic loss over an empty batch".into()));
    }
    let n = batch.len();
    let tape = critic.forward_batch(&stack_inputs(batch, false), n)?;
    let next_values = target.forward_batch(&stack_inputs(batch, true), n)?;
    check_finite(tape.output(), "critic value")?;
    check_finite(next_values.output(), "target critic value")?;
    let inv_n = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    let mut delta = Vec::with_capacity(n);
    let mut upstream = Vec::with_capacity(n);
    for (i, t) in batch.iter().enumerate() {
        let cont = if t.done { T::zero() } else { T::one() };
        let d = t.r_env + gamma * cont * next_values.output()[i] - tape.output()[i];
        loss = loss + d * d * inv_n;
        upstream.push(T::of(-2.0) * d * inv_n);
        delta.push(d);
    }
    let (grad, _) = critic.backward_batch(&tape, &upstream)?;
    Ok(CriticLoss { loss, delta, grad })
}

/// `-mean(log pi(r_i | s_i) * delta_i)` with `r_i` reparameterized by
/// `noise[i]`; `delta` is treated as a constant.
pub fn actor_objective<T: Float>(
    actor: &Network<T>,
    batch: &[&Transition<T>],
    delta: &[T],
    noise: &[T],
    space: &RewardSpace<T>,
) -> Result<ActorLoss<T>> {
    let n = batch.len();
    if delta.len() != n || noise.len() != n {
        return Err(Error::Usage(format!(
            "actor loss: {} transitions, {} deltas, {} noise draws",
            n,
            delta.len(),
            noise.len()
        )));
    }
    if n == 0 {
        return Err(Error::Usage("actor loss over an empty batch".into()));
    }
    let tape = actor.forward_batch(&stack_inputs(batch, false), n)?;
    check_finite(tape.output(), "actor output")?;
    let inv_n = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    let mut upstream = Vec::with_capacity(2 * n);
    for i in 0..n {
        let raw = tape.output_row(i);
        let log_std = squash_log_std(raw[1]);
        let (_, logp) = gaussian::sample_and_logprob(raw[0], log_std, space, noise[i]);
        let (d_mean, d_log_std) = gaussian::logprob_grad(raw[0], log_std, noise[i]);
        let w = -delta[i] * inv_n;
        loss = loss + w * logp;
        upstream.push(w * d_mean);
        upstream.push(w * d_log_std * squash_log_std_slope(raw[1]));
    }
    let (grad, _) = actor.backward_batch(&tape, &upstream)?;
    Ok(ActorLoss { loss, grad })
}

/// Actor, critic, target critic and their optimizer states.
#[derive(Clone, Debug, PartialEq)]
pub struct CraState<T> {
    pub actor: Network<T>,
    pub critic: Network<T>,
    pub target_critic: Network<T>,
    actor_opt: AdamState<T>,
    critic_opt: AdamState<T>,
    updates: u64,
    reward_space: RewardSpace<T>,
    obs_dim: usize,
}

impl<T: Float> CraState<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, config: &CraConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let input = obs_dim + ACTION_COUNT;
        let actor_spec = NetSpec::new(input, config.hidden.clone(), 2)?.with_activation(config.activation);
        let critic_spec = NetSpec::new(input, config.hidden.clone(), 1)?.with_activation(config.activation);
        let actor = Network::new(actor_spec, rng);
        let critic = Network::new(critic_spec, rng);
        Ok(Self::from_networks(actor, critic.clone(), critic, config.reward_space(), obs_dim))
    }

    fn from_networks(
        actor: Network<T>,
        critic: Network<T>,
        target_critic: Network<T>,
        reward_space: RewardSpace<T>,
        obs_dim: usize,
    ) -> Self {
        CraState {
            actor_opt: AdamState::new(actor.params.len()),
            critic_opt: AdamState::new(critic.params.len()),
            actor,
            critic,
            target_critic,
            updates: 0,
            reward_space,
            obs_dim,
        }
    }

    pub fn reward_space(&self) -> RewardSpace<T> {
        self.reward_space
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    fn head(&self, obs: &Observation<T>, action: ActionId) -> Result<(T, T)> {
        if obs.0.len() != self.obs_dim || action.0 >= ACTION_COUNT {
            return Err(Error::Usage(format!(
                "reward agent expects {}-dim observations and actions < {ACTION_COUNT}",
                self.obs_dim
            )));
        }
        let raw = self.actor.forward(&reward_input(obs, action))?;
        Ok((raw[0], squash_log_std(raw[1])))
    }

    pub fn knowledge_reward<R: Rng + ?Sized>(
        &self,
        obs: &Observation<T>,
        action: ActionId,
        mode: RewardMode<'_, R>,
    ) -> Result<T> {
        let (mean, log_std) = self.head(obs, action)?;
        Ok(match mode {
            RewardMode::Mean => gaussian::mean_value(mean, &self.reward_space),
            RewardMode::Sample(rng) => {
                let noise: f64 = StandardNormal.sample(rng);
                gaussian::sample_and_logprob(mean, log_std, &self.reward_space, T::of(noise)).0
            }
        })
    }

    pub fn mean_reward(&self, obs: &Observation<T>, action: ActionId) -> Result<T> {
        self.knowledge_reward::<rand::rngs::ThreadRng>(obs, action, RewardMode::Mean)
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, obs: &Observation<T>, action: ActionId, rng: &mut R) -> Result<T> {
        self.knowledge_reward(obs, action, RewardMode::Sample(rng))
    }

    pub fn critic_loss(&self, batch: &[&Transition<T>], gamma: T) -> Result<CriticLoss<T>> {
        critic_objective(&self.critic, &self.target_critic, batch, gamma)
    }

    pub fn actor_loss<R: Rng + ?Sized>(&self, batch: &[&Transition<T>], delta: &[T], rng: &mut R) -> Result<ActorLoss<T>> {
        let noise = draw_noise(batch.len(), rng);
        actor_objective(&self.actor, batch, delta, &noise, &self.reward_space)
    }

    /// One critic step, an actor step every `actor_update_every` calls, and
    /// a soft target update.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition<T>],
        config: &CraConfig,
        rng: &mut R,
    ) -> Result<CraDiagnostics> {
        let critic = self.critic_loss(batch, T::of(config.gamma))?;
        // the actor is weighted by the TD errors of the pre-step critic
        let actor = if (self.updates + 1).is_multiple_of(config.actor_update_every) {
            Some(self.actor_loss(batch, &critic.delta, rng)?)
        } else {
            None
        };
        adam_step(&mut self.critic_opt, self.critic.params.values_mut(), critic.grad.values(), T::of(config.lr_critic))?;
        if let Some(a) = &actor {
            adam_step(&mut self.actor_opt, self.actor.params.values_mut(), a.grad.values(), T::of(config.lr_actor))?;
        }
        self.target_critic.params.soft_update_from(&self.critic.params, T::of(config.tau));
        self.updates += 1;
        let n = critic.delta.len() as f64;
        Ok(CraDiagnostics {
            critic_loss: critic.loss.as_f64(),
            actor_loss: actor.map(|a| a.loss.as_f64()),
            mean_abs_delta: critic.delta.iter().map(|d| d.abs().as_f64()).sum::<f64>() / n,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new()
            .with_meta("kind", "cra")
            .with_meta("obs_dim", self.obs_dim)
            .with_meta("r_min", self.reward_space.r_min.as_f64())
            .with_meta("r_max", self.reward_space.r_max.as_f64())
            .with_meta("updates", self.updates)
            .with_net("actor", &self.actor)
            .with_net("critic", &self.critic)
            .with_net("target_critic", &self.target_critic)
    }

    /// Restores networks; optimizer moments start fresh.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind") != Some("cra") {
            return Err(Error::Config("checkpoint does not hold a reward agent".into()));
        }
        let num = |k: &str| -> Result<f64> {
            ck.meta(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("reward agent checkpoint lacks {k}")))
        };
        let obs_dim = num("obs_dim")? as usize;
        let space = RewardSpace::new(T::of(num("r_min")?), T::of(num("r_max")?))?;
        let actor = ck.net::<T>("actor")?;
        let critic = ck.net::<T>("critic")?;
        let target = ck.net::<T>("target_critic")?;
        let input = obs_dim + ACTION_COUNT;
        if actor.spec.input_dim != input || critic.spec.input_dim != input || actor.spec.output_dim != 2 {
            return Err(Error::Config("reward agent checkpoint has inconsistent network shapes".into()));
        }
        if critic.spec != target.spec || critic.spec.output_dim != 1 {
            return Err(Error::Config("critic and target critic shapes differ".into()));
        }
        let mut s = Self::from_networks(actor, critic, target, space, obs_dim);
        s.updates = num("updates")? as u64;
        Ok(s)
    }

    /// Order-sensitive hash of all parameters, used to prove a reward agent
    /// was left untouched.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for net in [&self.actor, &self.critic, &self.target_critic] {
            for v in net.params.values() {
                for b in v.as_f64().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}

pub fn draw_noise<T: Float, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z)
        })
        .collect()
}

impl<T: Float> KnowledgeSource<T> for CraState<T> {
    fn mean_rewards(&self, batch: &[&Transition<T>]) -> Result<Vec<T>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let tape = self.actor.forward_batch(&stack_inputs(batch, false), batch.len())?;
        Ok((0..batch.len())
            .map(|i| gaussian::mean_value(tape.output_row(i)[0], &self.reward_space))
            .collect())
    }
}
