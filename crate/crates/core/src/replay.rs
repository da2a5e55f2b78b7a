//! Concatenated replay storage: one FIFO sub-buffer per task.
//!
//! Policy agents sample uniformly from their own sub-buffer; the reward
//! agent draws cross-task batches whose per-task counts are apportioned
//! from a [`SamplingWeights`] vector.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::approximator::RewardSpace;
use crate::envsuite::{ActionId, Observation, ACTION_COUNT};
use crate::error::{Error, Result};
use crate::float::Float;

pub const DEFAULT_CAPACITY: usize = 1_000_000;

/// One stored interaction step of task `task_id`.
///
/// `(obs, action)` and `(next_obs, next_action)` are the reward agent's
/// inputs at `t` and `t + 1`. `r_knw_stored` is the knowledge reward drawn
/// at collection time and is kept for diagnostics only.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub task_id: usize,
    pub obs: Observation<T>,
    pub action: ActionId,
    pub next_obs: Observation<T>,
    pub next_action: ActionId,
    pub r_env: T,
    pub r_knw_stored: T,
    pub done: bool,
}

/// Observation features followed by a one-hot action.
pub fn reward_input<T: Float>(obs: &Observation<T>, action: ActionId) -> Vec<T> {
    let mut v = Vec::with_capacity(obs.0.len() + ACTION_COUNT);
    v.extend_from_slice(&obs.0);
    v.extend(action.one_hot::<T>());
    v
}

impl<T: Float> Transition<T> {
    /// `s^rwd_t`
    pub fn reward_state(&self) -> Vec<T> {
        reward_input(&self.obs, self.action)
    }

    /// `s^rwd_{t+1}`
    pub fn next_reward_state(&self) -> Vec<T> {
        reward_input(&self.next_obs, self.next_action)
    }
}

/// Probability vector over tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingWeights(Vec<f64>);

impl SamplingWeights {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Validation("sampling weights must cover at least one task".into()));
        }
        if let Some(i) = w.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Validation(format!("sampling weight {i} is {}", w[i])));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::Validation(format!("sampling weights sum to {sum}, not 1")));
        }
        Ok(SamplingWeights(w))
    }

    pub fn uniform(n: usize) -> Self {
        SamplingWeights(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        SamplingWeights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Largest-remainder apportionment of `batch` items by `weights`,
/// breaking equal remainders toward the lower task index.
pub fn allocate(weights: &SamplingWeights, batch: usize) -> Vec<usize> {
    let w = weights.as_slice();
    let total: f64 = w.iter().sum();
    let quotas: Vec<f64> = w.iter().map(|x| batch as f64 * x / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..w.len()).collect();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    for k in 0..batch.saturating_sub(assigned) {
        counts[order[k % order.len()]] += 1;
    }
    counts
}

/// FIFO storage for one task.
#[derive(Clone, Debug)]
pub struct SubBuffer<T> {
    items: VecDeque<Transition<T>>,
    capacity: usize,
}

impl<T: Float> SubBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        SubBuffer { items: VecDeque::new(), capacity }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        self.items.iter()
    }

    fn push_unchecked(&mut self, t: Transition<T>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// `batch` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition<T>>> {
        if self.items.is_empty() {
            return Err(Error::NotReady("sub-buffer is empty".into()));
        }
        Ok((0..batch).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}

/// Union of per-task sub-buffers sharing one validation policy.
#[derive(Clone, Debug)]
pub struct ConcatReplay<T> {
    subs: Vec<SubBuffer<T>>,
    reward_space: RewardSpace<T>,
}

impl<T: Float> ConcatReplay<T> {
    pub fn new(tasks: usize, capacity: usize, reward_space: RewardSpace<T>) -> Result<Self> {
        if tasks == 0 || capacity == 0 {
            return Err(Error::Config("replay needs >= 1 task and capacity >= 1".into()));
        }
        Ok(ConcatReplay { subs: (0..tasks).map(|_| SubBuffer::new(capacity)).collect(), reward_space })
    }

    pub fn task_count(&self) -> usize {
        self.subs.len()
    }

    pub fn sub(&self, task: usize) -> &SubBuffer<T> {
        &self.subs[task]
    }

    pub fn len(&self, task: usize) -> usize {
        self.subs[task].len()
    }

    pub fn total_len(&self) -> usize {
        self.subs.iter().map(SubBuffer::len).sum()
    }

    pub fn validate(&self, t: &Transition<T>) -> Result<()> {
        if t.task_id >= self.subs.len() {
            return Err(Error::Usage(format!("unknown task id {} (have {})", t.task_id, self.subs.len())));
        }
        check_contents(t, &self.reward_space)
    }

    pub fn push(&mut self, t: Transition<T>) -> Result<()> {
        self.validate(&t)?;
        self.subs[t.task_id].push_unchecked(t);
        Ok(())
    }

    pub fn sample_task<R: Rng + ?Sized>(&self, task: usize, batch: usize, rng: &mut R) -> Result<Vec<&Transition<T>>> {
        self.subs
            .get(task)
            .ok_or_else(|| Error::Usage(format!("unknown task id {task}")))?
            .sample(batch, rng)
    }

    /// Per-task counts actually drawn by [`Self::sample_cra`]: weights of
    /// empty sub-buffers are dropped and the rest renormalized.
    pub fn effective_allocation(&self, weights: &SamplingWeights, batch: usize) -> Result<Vec<usize>> {
        if weights.len() != self.subs.len() {
            return Err(Error::Usage(format!("{} weights for {} tasks", weights.len(), self.subs.len())));
        }
        let counts = allocate(weights, batch);
        if counts.iter().zip(&self.subs).all(|(&n, s)| n == 0 || !s.is_empty()) {
            return Ok(counts);
        }
        let kept: Vec<f64> = weights
            .as_slice()
            .iter()
            .zip(&self.subs)
            .map(|(&w, s)| if s.is_empty() { 0.0 } else { w })
            .collect();
        let mass: f64 = kept.iter().sum();
        if mass <= 0.0 {
            return Err(Error::NotReady("every weighted sub-buffer is empty".into()));
        }
        Ok(allocate(&SamplingWeights(kept.iter().map(|w| w / mass).collect()), batch))
    }

    /// Cross-task batch: `n_i` uniform draws from each sub-buffer, shuffled.
    pub fn sample_cra<R: Rng + ?Sized>(
        &self,
        weights: &SamplingWeights,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition<T>>> {
        let counts = self.effective_allocation(weights, batch)?;
        let mut out = Vec::with_capacity(batch);
        for (sub, &n) in self.subs.iter().zip(&counts) {
            if n > 0 {
                out.extend(sub.sample(n, rng)?);
            }
        }
        out.shuffle(rng);
        Ok(out)
    }

    /// Mutable access to every sub-buffer at once, for per-task writers.
    pub fn writers(&mut self) -> Vec<SubWriter<'_, T>> {
        let reward_space = self.reward_space;
        self.subs
            .iter_mut()
            .enumerate()
            .map(|(task_id, sub)| SubWriter { task_id, sub, reward_space })
            .collect()
    }
}

fn check_contents<T: Float>(t: &Transition<T>, space: &RewardSpace<T>) -> Result<()> {
    if t.r_env != T::zero() && t.r_env != T::one() {
        return Err(Error::Validation(format!("environmental reward {} is not 0 or 1", t.r_env)));
    }
    if !space.contains(t.r_knw_stored) {
        return Err(Error::Validation(format!("knowledge reward {} outside reward space", t.r_knw_stored)));
    }
    if t.obs.0.len() != t.next_obs.0.len() {
        return Err(Error::Validation("observation lengths differ within a transition".into()));
    }
    if t.action.0 >= ACTION_COUNT || t.next_action.0 >= ACTION_COUNT {
        return Err(Error::Validation("action index out of range".into()));
    }
    Ok(())
}

/// Exclusive write handle on one task's sub-buffer.
pub struct SubWriter<'a, T> {
    task_id: usize,
    sub: &'a mut SubBuffer<T>,
    reward_space: RewardSpace<T>,
}

impl<T: Float> SubWriter<'_, T> {
    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn buffer(&self) -> &SubBuffer<T> {
        self.sub
    }

    pub fn push(&mut self, t: Transition<T>) -> Result<()> {
        if t.task_id != self.task_id {
            return Err(Error::Usage(format!(
                "transition for task {} pushed to sub-buffer {}",
                t.task_id, self.task_id
            )));
        }
        check_contents(&t, &self.reward_space)?;
        self.sub.push_unchecked(t);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(task_id: usize, tag: f64) -> Transition<f64> {
        Transition {
            task_id,
            obs: Observation(vec![tag, 0.0]),
            action: ActionId(0),
            next_obs: Observation(vec![tag, 1.0]),
            next_action: ActionId(1),
            r_env: 0.0,
            r_knw_stored: 0.0,
            done: false,
        }
    }

    fn buf(tasks: usize, cap: usize) -> ConcatReplay<f64> {
        ConcatReplay::new(tasks, cap, RewardSpace::default()).unwrap()
    }

    #[test]
    fn push_and_fifo_eviction() {
        let mut b = buf(1, 3);
        b.push(tr(0, 0.0)).unwrap();
        assert_eq!(b.len(0), 1);
        for i in 1..4 {
            b.push(tr(0, i as f64)).unwrap();
        }
        assert_eq!(b.len(0), 3);
        assert!(b.sub(0).iter().all(|t| t.obs.0[0] != 0.0));
    }

    #[test]
    fn push_validation() {
        let mut b = buf(2, 10);
        let mut t = tr(0, 0.0);
        t.r_env = 0.5;
        assert!(matches!(b.push(t), Err(Error::Validation(_))));
        let mut t = tr(0, 0.0);
        t.r_knw_stored = 1.5;
        assert!(matches!(b.push(t), Err(Error::Validation(_))));
        assert!(matches!(b.push(tr(2, 0.0)), Err(Error::Usage(_))));
    }

    #[test]
    fn reward_state_is_obs_plus_one_hot() {
        let t = tr(0, 0.25);
        assert_eq!(t.reward_state(), vec![0.25, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.next_reward_state(), vec![0.25, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn sampling_with_replacement_and_not_ready() {
        let mut b = buf(2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample_task(0, 3, &mut rng), Err(Error::NotReady(_))));
        b.push(tr(0, 7.0)).unwrap();
        let s = b.sample_task(0, 3, &mut rng).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|t| t.obs.0[0] == 7.0));
    }

    #[test]
    fn fixed_seed_gives_identical_batches() {
        let mut b = buf(1, 100);
        for i in 0..50 {
            b.push(tr(0, i as f64)).unwrap();
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            b.sample_task(0, 16, &mut rng).unwrap().iter().map(|t| t.obs.0[0]).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn allocation_examples() {
        let w = |v: Vec<f64>| SamplingWeights::new(v).unwrap();
        assert_eq!(allocate(&w(vec![0.25; 4]), 256), vec![64; 4]);
        assert_eq!(allocate(&w(vec![0.5, 0.2, 0.2, 0.1]), 10), vec![5, 2, 2, 1]);
        assert_eq!(allocate(&SamplingWeights::uniform(3), 256), vec![86, 85, 85]);
        assert_eq!(allocate(&SamplingWeights::one_hot(3, 1), 7), vec![0, 7, 0]);
        assert_eq!(allocate(&SamplingWeights::uniform(4), 0), vec![0; 4]);
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(SamplingWeights::new(vec![0.5, 0.6]).is_err());
        assert!(SamplingWeights::new(vec![-0.1, 1.1]).is_err());
        assert!(SamplingWeights::new(vec![]).is_err());
    }

    #[test]
    fn one_hot_weight_draws_from_one_task() {
        let mut b = buf(4, 100);
        for task in 0..4 {
            for i in 0..10 {
                b.push(tr(task, i as f64)).unwrap();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = b.sample_cra(&SamplingWeights::one_hot(4, 2), 32, &mut rng).unwrap();
        assert_eq!(s.len(), 32);
        assert!(s.iter().all(|t| t.task_id == 2));
        let s = b.sample_cra(&SamplingWeights::uniform(4), 256, &mut rng).unwrap();
        for task in 0..4 {
            assert_eq!(s.iter().filter(|t| t.task_id == task).count(), 64);
        }
    }

    #[test]
    fn empty_sub_buffer_quota_is_redistributed() {
        let mut b = buf(4, 100);
        for task in 0..3 {
            b.push(tr(task, 0.0)).unwrap();
        }
        let w = SamplingWeights::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        // renormalized (1/6, 2/6, 3/6) of 256 = (42.67, 85.33, 128) -> (43, 85, 128)
        let expect = allocate(&SamplingWeights::new(vec![1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 0.0]).unwrap(), 256);
        assert_eq!(expect, vec![43, 85, 128, 0]);
        assert_eq!(b.effective_allocation(&w, 256).unwrap(), expect);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = b.sample_cra(&w, 256, &mut rng).unwrap();
        for (task, &n) in expect.iter().enumerate() {
            assert_eq!(s.iter().filter(|t| t.task_id == task).count(), n);
        }
        assert!(matches!(buf(2, 5).sample_cra(&SamplingWeights::uniform(2), 8, &mut rng), Err(Error::NotReady(_))));
    }

    #[test]
    fn writer_rejects_foreign_task() {
        let mut b = buf(2, 10);
        let mut ws = b.writers();
        assert!(ws[1].push(tr(0, 0.0)).is_err());
        ws[1].push(tr(1, 0.0)).unwrap();
        drop(ws);
        assert_eq!(b.len(1), 1);
    }
}
