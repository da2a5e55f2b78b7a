//! Sampling weights that steer how much of each task's experience the
//! reward agent sees.
//!
//! * similarity: tasks whose mean hidden feature projects weakly onto the
//!   centroid of all tasks get more weight (`softmax(1 / s_i)`);
//! * performance: tasks with low recent environmental reward get more
//!   weight (`softmax(1 / R_tail_i)`);
//! * the two are mixed as `alpha * w_sim + (1 - alpha) * w_per`.
//!
//! Scores at or below `floor_epsilon` are raised to it before inversion, so
//! non-positive similarities and zero returns stay finite.

use std::borrow::Borrow;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replay::SamplingWeights;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub alpha: f64,
    pub window: usize,
    pub floor_epsilon: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { alpha: DEFAULT_ALPHA, window: DEFAULT_WINDOW, floor_epsilon: DEFAULT_FLOOR }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.window == 0 {
            return Err(Error::Config("window K must be >= 1".into()));
        }
        if !(self.floor_epsilon > 0.0 && self.floor_epsilon.is_finite()) {
            return Err(Error::Config(format!("floor epsilon {} must be positive", self.floor_epsilon)));
        }
        Ok(())
    }
}

/// The most recent `K` hidden-feature vectors of one task.
#[derive(Clone, Debug)]
pub struct FeatureWindow {
    items: VecDeque<Vec<f64>>,
    capacity: usize,
}

impl FeatureWindow {
    pub fn new(capacity: usize) -> Self {
        FeatureWindow { items: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn push(&mut self, feature: Vec<f64>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(feature);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Element-wise mean of the stored features.
    pub fn mean(&self) -> Option<Vec<f64>> {
        let first = self.items.front()?;
        let mut acc = vec![0.0; first.len()];
        for f in &self.items {
            for (a, v) in acc.iter_mut().zip(f) {
                *a += v;
            }
        }
        let n = self.items.len() as f64;
        Some(acc.into_iter().map(|a| a / n).collect())
    }
}

/// The most recent `K` environmental rewards of one task.
#[derive(Clone, Debug)]
pub struct ReturnWindow {
    items: VecDeque<f64>,
    capacity: usize,
}

impl ReturnWindow {
    pub fn new(capacity: usize) -> Self {
        ReturnWindow { items: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn push(&mut self, reward: f64) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(reward);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `R_tail`: mean of the stored rewards.
    pub fn tail_mean(&self) -> Option<f64> {
        (!self.items.is_empty()).then(|| self.items.iter().sum::<f64>() / self.items.len() as f64)
    }
}

/// `softmax(1 / max(x_i, floor))`, shifted by the maximum logit.
pub fn reciprocal_softmax(scores: &[f64], floor: f64) -> Vec<f64> {
    let logits: Vec<f64> = scores.iter().map(|&s| 1.0 / s.max(floor)).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = exps.iter().sum();
    // a floored score can outweigh the others by ~1/floor in the logits;
    // keep underflowed entries representable and positive
    exps.into_iter().map(|e| (e / z).max(f64::MIN_POSITIVE)).collect()
}

/// Scaled dot products of each task's mean feature with the task centroid.
pub fn similarity_scores(means: &[Vec<f64>]) -> Vec<f64> {
    let n = means.len() as f64;
    let dim = means[0].len();
    let mut centroid = vec![0.0; dim];
    for h in means {
        for (c, v) in centroid.iter_mut().zip(h) {
            *c += v / n;
        }
    }
    let scale = (dim as f64).sqrt();
    means.iter().map(|h| h.iter().zip(&centroid).map(|(a, b)| a * b).sum::<f64>() / scale).collect()
}

pub fn similarity_weights<W: Borrow<FeatureWindow>>(windows: &[W], floor: f64) -> Result<SamplingWeights> {
    let means = windows
        .iter()
        .enumerate()
        .map(|(i, w)| w.borrow().mean().ok_or_else(|| Error::NotReady(format!("task {i} has no hidden features yet"))))
        .collect::<Result<Vec<_>>>()?;
    if means.is_empty() {
        return Err(Error::NotReady("no tasks".into()));
    }
    if means.iter().any(|m| m.len() != means[0].len()) {
        return Err(Error::Usage("hidden features differ in dimension across tasks".into()));
    }
    SamplingWeights::new(reciprocal_softmax(&similarity_scores(&means), floor))
}

pub fn performance_weights<W: Borrow<ReturnWindow>>(windows: &[W], floor: f64) -> Result<SamplingWeights> {
    let tails = windows
        .iter()
        .enumerate()
        .map(|(i, w)| w.borrow().tail_mean().ok_or_else(|| Error::NotReady(format!("task {i} has no rewards yet"))))
        .collect::<Result<Vec<_>>>()?;
    if tails.is_empty() {
        return Err(Error::NotReady("no tasks".into()));
    }
    SamplingWeights::new(reciprocal_softmax(&tails, floor))
}

pub fn combine(w_sim: &SamplingWeights, w_per: &SamplingWeights, alpha: f64) -> Result<SamplingWeights> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    if w_sim.len() != w_per.len() {
        return Err(Error::Usage("weight vectors differ in length".into()));
    }
    let w = w_sim
        .as_slice()
        .iter()
        .zip(w_per.as_slice())
        .map(|(s, p)| alpha * s + (1.0 - alpha) * p)
        .collect();
    SamplingWeights::new(w)
}

/// All three weight vectors for one point in time.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSnapshot {
    pub similarity: SamplingWeights,
    pub performance: SamplingWeights,
    pub combined: SamplingWeights,
}

pub fn compute_weights<F: Borrow<FeatureWindow>, R: Borrow<ReturnWindow>>(
    features: &[F],
    returns: &[R],
    config: &WeightConfig,
) -> Result<WeightSnapshot> {
    let similarity = similarity_weights(features, config.floor_epsilon)?;
    let performance = performance_weights(returns, config.floor_epsilon)?;
    let combined = combine(&similarity, &performance, config.alpha)?;
    Ok(WeightSnapshot { similarity, performance, combined })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fw(vs: &[&[f64]]) -> FeatureWindow {
        let mut w = FeatureWindow::new(10);
        for v in vs {
            w.push(v.to_vec());
        }
        w
    }

    fn rw(r: f64) -> ReturnWindow {
        let mut w = ReturnWindow::new(4);
        w.push(r);
        w
    }

    #[test]
    fn identical_features_give_uniform_weights() {
        let ws = vec![fw(&[&[0.3, 0.7]]); 4];
        let w = similarity_weights(&ws, DEFAULT_FLOOR).unwrap();
        for &x in w.as_slice() {
            assert!((x - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn outlier_task_dominates_similarity_weight() {
        // c = (2/3, 1/3); s = (2/3, 2/3, 1/3) / sqrt 2
        let ws = vec![fw(&[&[1.0, 0.0]]), fw(&[&[1.0, 0.0]]), fw(&[&[0.0, 1.0]])];
        let means: Vec<_> = ws.iter().map(|w| w.mean().unwrap()).collect();
        let s = similarity_scores(&means);
        assert!((s[0] - 0.4714045207910317).abs() < 1e-12);
        assert!((s[2] - 0.23570226039551584).abs() < 1e-12);
        // logits (2.1213, 2.1213, 4.2426), evaluated independently
        let w = similarity_weights(&ws, DEFAULT_FLOOR).unwrap();
        let expect = [0.09669174, 0.09669174, 0.80661651];
        for (x, e) in w.as_slice().iter().zip(expect) {
            assert!((x - e).abs() < 1e-8);
        }
    }

    #[test]
    fn window_mean_uses_only_present_entries() {
        let mut w = FeatureWindow::new(2);
        w.push(vec![1.0]);
        assert_eq!(w.mean().unwrap(), vec![1.0]);
        w.push(vec![3.0]);
        w.push(vec![5.0]);
        assert_eq!(w.len(), 2);
        assert_eq!(w.mean().unwrap(), vec![4.0]);
    }

    #[test]
    fn empty_windows_are_not_ready() {
        assert!(matches!(similarity_weights(&[FeatureWindow::new(3)], 1e-6), Err(Error::NotReady(_))));
        assert!(matches!(performance_weights(&[ReturnWindow::new(3)], 1e-6), Err(Error::NotReady(_))));
    }

    #[test]
    fn lagging_task_gets_largest_performance_weight() {
        let mut tails = vec![ReturnWindow::new(100); 4];
        for (i, t) in tails.iter_mut().enumerate() {
            let hits = if i == 0 { 1 } else { 50 };
            for k in 0..100 {
                t.push(if k < hits { 1.0 } else { 0.0 });
            }
        }
        let w = performance_weights(&tails, DEFAULT_FLOOR).unwrap();
        let s = w.as_slice();
        assert!(s[0] > s[1] && s[1] == s[2] && s[2] == s[3]);
    }

    #[test]
    fn all_zero_returns_floor_to_uniform() {
        let w = performance_weights(&[rw(0.0), rw(0.0), rw(0.0)], DEFAULT_FLOOR).unwrap();
        for &x in w.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_endpoints_and_midpoint() {
        let a = SamplingWeights::new(vec![0.6, 0.4]).unwrap();
        let b = SamplingWeights::new(vec![0.2, 0.8]).unwrap();
        assert_eq!(combine(&a, &b, 1.0).unwrap(), a);
        assert_eq!(combine(&a, &b, 0.0).unwrap(), b);
        let m = combine(&a, &b, 0.5).unwrap();
        assert!((m.as_slice()[0] - 0.4).abs() < 1e-15 && (m.as_slice()[1] - 0.6).abs() < 1e-15);
        assert!(matches!(combine(&a, &b, 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn floor_keeps_logits_finite() {
        let w = reciprocal_softmax(&[-3.0, 0.0, 1e-300], 1e-6);
        assert!(w.iter().all(|x| x.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
