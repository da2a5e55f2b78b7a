//! Per-task DQN policy agents trained on `r_env + lambda * r_knw`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{adam_step, Activation, AdamState, Checkpoint, NetSpec, Network};
use crate::cra::KnowledgeSource;
use crate::envsuite::{ActionId, Observation, ACTION_COUNT};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::replay::Transition;

/// Penultimate Q-network activations for one visited state.
pub type HiddenFeature<T> = Vec<T>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub gamma: f64,
    pub batch_size: usize,
    pub burn_in: usize,
    pub buffer_capacity: usize,
    pub lr: f64,
    pub tau: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Share of the per-task step budget over which epsilon decays.
    pub eps_decay_fraction: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: vec![128, 128],
            activation: Activation::Relu,
            gamma: 0.99,
            batch_size: 128,
            burn_in: 10_000,
            buffer_capacity: 1_000_000,
            lr: 1e-3,
            tau: 5e-3,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_fraction: 0.5,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("dqn: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be >= 1".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("the Q-network needs at least one hidden layer of width >= 1".into());
        }
        if !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.tau) {
            return bad("lr must be positive and tau in [0, 1]".into());
        }
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return bad(format!("need 0 <= eps_end ({}) <= eps_start ({}) <= 1", self.eps_end, self.eps_start));
        }
        if !(0.0..=1.0).contains(&self.eps_decay_fraction) {
            return bad(format!("eps_decay_fraction {} outside [0, 1]", self.eps_decay_fraction));
        }
        Ok(())
    }

    pub fn epsilon_schedule(&self, total_steps: usize) -> EpsilonSchedule {
        let decay = (self.eps_decay_fraction * total_steps as f64).round() as u64;
        EpsilonSchedule::new(self.eps_start, self.eps_end, decay)
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, then constant.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonSchedule {
    start: f64,
    end: f64,
    decay_steps: u64,
    position: u64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, decay_steps: u64) -> Self {
        EpsilonSchedule { start, end, decay_steps, position: 0 }
    }

    pub fn constant(eps: f64) -> Self {
        Self::new(eps, eps, 0)
    }

    pub fn value(&self) -> f64 {
        if self.position >= self.decay_steps {
            return self.end;
        }
        let frac = self.position as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn advance(&mut self) {
        self.position = self.position.saturating_add(1);
    }
}

/// How the Q-target reward is formed.
#[derive(Clone, Copy)]
pub enum Shaping<'a, T> {
    /// Environmental reward alone.
    None,
    Knowledge { source: &'a dyn KnowledgeSource<T>, lambda: T },
}

/// `r_env + lambda * r_knw`.
pub fn augmented_reward<T: Float>(r_env: T, r_knw: T, lambda: T) -> Result<T> {
    if !(lambda > T::zero() && lambda <= T::one()) {
        return Err(Error::Config(format!("lambda {} outside (0, 1]", lambda.as_f64())));
    }
    Ok(r_env + lambda * r_knw)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdLoss<T> {
    pub loss: T,
    pub grad: Vec<T>,
    pub mean_r_pol: T,
    pub mean_r_knw: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DqnDiagnostics {
    pub td_loss: f64,
    pub mean_r_pol: f64,
    pub mean_r_knw: f64,
}

fn greedy_index<T: Float>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Mean squared TD error of `q` against `r_pol + gamma (1 - done) max_a
/// target(s', a)`, with its gradient with respect to `q`'s parameters.
pub fn td_objective<T: Float>(
    q: &Network<T>,
    target: &Network<T>,
    batch: &[&Transition<T>],
    gamma: T,
    shaping: Shaping<'_, T>,
) -> Result<TdLoss<T>> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Usage("TD loss over an empty batch".into()));
    }
    let dim = q.spec.input_dim;
    let mut obs = Vec::with_capacity(n * dim);
    let mut next = Vec::with_capacity(n * dim);
    for t in batch {
        if t.obs.0.len() != dim || t.next_obs.0.len() != dim {
            return Err(Error::Usage(format!("Q-network expects {dim}-dim observations")));
        }
        obs.extend_from_slice(&t.obs.0);
        next.extend_from_slice(&t.next_obs.0);
    }
    let (r_knw, lambda) = match shaping {
        Shaping::None => (vec![T::zero(); n], T::zero()),
        Shaping::Knowledge { source, lambda } => {
            augmented_reward(T::zero(), T::zero(), lambda)?;
            (source.mean_rewards(batch)?, lambda)
        }
    };
    if r_knw.len() != n {
        return Err(Error::Usage("knowledge source returned a wrong-length batch".into()));
    }
    let tape = q.forward_batch(&obs, n)?;
    let next_q = target.forward_batch(&next, n)?;
    if let Some(index) = tape.output().iter().chain(next_q.output()).position(|v| !v.is_finite()) {
        return Err(Error::Numeric { what: "Q-value", index });
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    let mut sum_pol = T::zero();
    let mut upstream = vec![T::zero(); n * ACTION_COUNT];
    for (i, t) in batch.iter().enumerate() {
        let r_pol = t.r_env + lambda * r_knw[i];
        sum_pol = sum_pol + r_pol;
        let row = next_q.output_row(i);
        let best = row[greedy_index(row)];
        let cont = if t.done { T::zero() } else { T::one() };
        let y = r_pol + gamma * cont * best;
        let d = tape.output_row(i)[t.action.0] - y;
        loss = loss + d * d * inv_n;
        upstream[i * ACTION_COUNT + t.action.0] = T::of(2.0) * d * inv_n;
    }
    let (grad, _) = q.backward_batch(&tape, &upstream)?;
    let sum_knw = r_knw.iter().fold(T::zero(), |a, &b| a + b);
    Ok(TdLoss { loss, grad: grad.into_values(), mean_r_pol: sum_pol * inv_n, mean_r_knw: sum_knw * inv_n })
}

/// Q-network, target network, optimizer and exploration state of one task.
#[derive(Clone, Debug, PartialEq)]
pub struct DqnState<T> {
    pub q: Network<T>,
    pub target: Network<T>,
    opt: AdamState<T>,
    pub epsilon: EpsilonSchedule,
    updates: u64,
}

impl<T: Float> DqnState<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, config: &DqnConfig, epsilon: EpsilonSchedule, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let spec = NetSpec::new(obs_dim, config.hidden.clone(), ACTION_COUNT)?.with_activation(config.activation);
        let q = Network::new(spec, rng);
        Ok(Self::from_networks(q.clone(), q, epsilon))
    }

    fn from_networks(q: Network<T>, target: Network<T>, epsilon: EpsilonSchedule) -> Self {
        DqnState { opt: AdamState::new(q.params.len()), q, target, epsilon, updates: 0 }
    }

    pub fn obs_dim(&self) -> usize {
        self.q.spec.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.q.spec.feature_dim()
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    /// Q-values and penultimate activations for one observation.
    pub fn evaluate(&self, obs: &Observation<T>) -> Result<(Vec<T>, HiddenFeature<T>)> {
        if obs.0.len() != self.obs_dim() {
            return Err(Error::Usage(format!(
                "observation has {} features, Q-network expects {}",
                obs.0.len(),
                self.obs_dim()
            )));
        }
        let tape = self.q.forward_batch(&obs.0, 1)?;
        Ok((tape.output_row(0).to_vec(), tape.feature_row(0).to_vec()))
    }

    pub fn greedy(&self, obs: &Observation<T>) -> Result<ActionId> {
        Ok(ActionId(greedy_index(&self.evaluate(obs)?.0)))
    }

    /// Epsilon-greedy action and the features of the greedy forward pass.
    pub fn act<R: Rng + ?Sized>(&self, obs: &Observation<T>, rng: &mut R) -> Result<(ActionId, HiddenFeature<T>)> {
        let (q, feature) = self.evaluate(obs)?;
        let explore = rng.random::<f64>() < self.epsilon.value();
        let action = if explore { rng.random_range(0..ACTION_COUNT) } else { greedy_index(&q) };
        Ok((ActionId(action), feature))
    }

    pub fn td_loss(&self, batch: &[&Transition<T>], gamma: T, shaping: Shaping<'_, T>) -> Result<TdLoss<T>> {
        td_objective(&self.q, &self.target, batch, gamma, shaping)
    }

    /// One Adam step on the TD loss, then a soft target update.
    pub fn update(&mut self, batch: &[&Transition<T>], shaping: Shaping<'_, T>, config: &DqnConfig) -> Result<DqnDiagnostics> {
        let l = self.td_loss(batch, T::of(config.gamma), shaping)?;
        adam_step(&mut self.opt, self.q.params.values_mut(), &l.grad, T::of(config.lr))?;
        self.target.params.soft_update_from(&self.q.params, T::of(config.tau));
        self.updates += 1;
        Ok(DqnDiagnostics {
            td_loss: l.loss.as_f64(),
            mean_r_pol: l.mean_r_pol.as_f64(),
            mean_r_knw: l.mean_r_knw.as_f64(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new()
            .with_meta("kind", "dqn")
            .with_meta("updates", self.updates)
            .with_net("q", &self.q)
            .with_net("target", &self.target)
    }

    /// Restores the networks with a greedy (epsilon 0) schedule and fresh
    /// optimizer moments.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind") != Some("dqn") {
            return Err(Error::Config("checkpoint does not hold a policy agent".into()));
        }
        let q = ck.net::<T>("q")?;
        let target = ck.net::<T>("target")?;
        if q.spec != target.spec || q.spec.output_dim != ACTION_COUNT {
            return Err(Error::Config("policy checkpoint has inconsistent network shapes".into()));
        }
        let mut s = Self::from_networks(q, target, EpsilonSchedule::constant(0.0));
        s.updates = ck.meta("updates").and_then(|v| v.parse().ok()).unwrap_or(0);
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::ParamVector;
    use crate::cra::{ConstantKnowledge, NoKnowledge};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config() -> DqnConfig {
        DqnConfig { hidden: vec![16, 8], ..DqnConfig::default() }
    }

    fn agent(eps: f64) -> DqnState<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        DqnState::new(3, &config(), EpsilonSchedule::constant(eps), &mut rng).unwrap()
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Transition<f64>> {
        (0..n)
            .map(|i| Transition {
                task_id: 0,
                obs: Observation((0..3).map(|_| rng.random::<f64>()).collect()),
                action: ActionId(i % ACTION_COUNT),
                next_obs: Observation((0..3).map(|_| rng.random::<f64>()).collect()),
                next_action: ActionId(0),
                r_env: if i % 3 == 0 { 1.0 } else { 0.0 },
                r_knw_stored: 0.0,
                done: i % 5 == 0,
            })
            .collect()
    }

    #[test]
    fn augmented_reward_examples() {
        assert!((augmented_reward(1.0f64, 0.4, 0.5).unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(augmented_reward(0.0f64, -1.0, 1.0).unwrap(), -1.0);
        assert!(matches!(augmented_reward(0.0f64, 0.5, 0.0), Err(Error::Config(_))));
        assert!(matches!(augmented_reward(0.0f64, 0.5, 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn epsilon_schedule_decays_linearly_then_holds() {
        let mut s = config().epsilon_schedule(100);
        assert_eq!(s.value(), 1.0);
        let mut prev = s.value();
        for _ in 0..100 {
            s.advance();
            assert!(s.value() <= prev);
            prev = s.value();
        }
        assert_eq!(s.value(), 0.05);
        let mut s = config().epsilon_schedule(100);
        for _ in 0..25 {
            s.advance();
        }
        assert!((s.value() - 0.525).abs() < 1e-12);
    }

    #[test]
    fn greedy_breaks_ties_low() {
        assert_eq!(greedy_index(&[0.1, 0.9, 0.2, 0.9]), 1);
        let mut a = agent(0.0);
        // output layer: zero weights, biases set the Q-values
        let spec = a.q.spec.clone();
        let last = spec.layout().last().unwrap().clone();
        let mut p = a.q.params.clone().into_values();
        for v in &mut p[last.weight.clone()] {
            *v = 0.0;
        }
        p[last.bias.clone()].copy_from_slice(&[0.1, 0.9, 0.2, 0.9]);
        a.q.params = ParamVector::from_values(&spec, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = Observation(vec![0.3, 0.2, 0.1]);
        let (act, feature) = a.act(&obs, &mut rng).unwrap();
        assert_eq!(act, ActionId(1));
        assert_eq!(feature.len(), 8);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let a = agent(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs = Observation(vec![0.3, 0.2, 0.1]);
        let mut counts = [0usize; ACTION_COUNT];
        for _ in 0..8000 {
            counts[a.act(&obs, &mut rng).unwrap().0 .0] += 1;
        }
        for c in counts {
            assert!((c as f64 / 8000.0 - 0.25).abs() < 0.02, "{counts:?}");
        }
        assert!(matches!(a.act(&Observation(vec![0.0; 2]), &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_knowledge_matches_plain_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let items = batch(&mut rng, 12);
        let refs: Vec<_> = items.iter().collect();
        let mut a = agent(0.1);
        let mut b = a.clone();
        a.update(&refs, Shaping::None, &config()).unwrap();
        b.update(&refs, Shaping::Knowledge { source: &NoKnowledge, lambda: 0.5 }, &config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_knowledge_is_a_reward_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let items = batch(&mut rng, 12);
        let shifted: Vec<_> = items.iter().map(|t| Transition { r_env: t.r_env + 0.5 * 0.4, ..t.clone() }).collect();
        let a = agent(0.1);
        let refs: Vec<_> = items.iter().collect();
        let srefs: Vec<_> = shifted.iter().collect();
        let k = a.td_loss(&refs, 0.99, Shaping::Knowledge { source: &ConstantKnowledge(0.4), lambda: 0.5 }).unwrap();
        let p = a.td_loss(&srefs, 0.99, Shaping::None).unwrap();
        assert!((k.loss - p.loss).abs() < 1e-12);
        assert!((k.mean_r_knw - 0.4).abs() < 1e-12);
    }

    #[test]
    fn terminal_target_is_reward_only() {
        let a = agent(0.0);
        let t = Transition {
            task_id: 0,
            obs: Observation(vec![0.1, 0.2, 0.3]),
            action: ActionId(2),
            next_obs: Observation(vec![0.5, 0.5, 0.5]),
            next_action: ActionId(0),
            r_env: 1.0,
            r_knw_stored: 0.0,
            done: true,
        };
        let q = a.evaluate(&t.obs).unwrap().0[2];
        let l = a.td_loss(&[&t], 0.99, Shaping::None).unwrap();
        assert!((l.loss - (q - 1.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let a = agent(0.3);
        let mut bytes = Vec::new();
        a.to_checkpoint().write_to(&mut bytes).unwrap();
        let b = DqnState::<f64>::from_checkpoint(&Checkpoint::read_from(&bytes[..]).unwrap()).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(b.epsilon.value(), 0.0);
    }
}
