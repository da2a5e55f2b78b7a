//! Tanh-squashed Gaussian head mapping network outputs onto a bounded interval.
//!
//! A raw head output `[mean, log_std_raw]` defines `u ~ N(mean, std^2)`;
//! the emitted value is `center + half_width * tanh(u)`. Its log-density
//! carries the tanh Jacobian and the affine rescale, so it is a proper
//! density on the open interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Closed real interval `[r_min, r_max]` of admissible values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpace<T> {
    pub r_min: T,
    pub r_max: T,
}

impl<T: Float> RewardSpace<T> {
    pub fn new(r_min: T, r_max: T) -> Result<Self> {
        if !(r_min < r_max) || !r_min.is_finite() || !r_max.is_finite() {
            return Err(Error::Config(format!("reward space requires r_min < r_max, got [{r_min}, {r_max}]")));
        }
        Ok(RewardSpace { r_min, r_max })
    }

    pub fn center(&self) -> T {
        (self.r_min + self.r_max) / T::of(2.0)
    }

    pub fn half_width(&self) -> T {
        (self.r_max - self.r_min) / T::of(2.0)
    }

    pub fn contains(&self, v: T) -> bool {
        v >= self.r_min && v <= self.r_max
    }

    /// Maps `y` in `[-1, 1]` onto the interval, clamped against rounding.
    fn rescale(&self, y: T) -> T {
        (self.center() + self.half_width() * y).max(self.r_min).min(self.r_max)
    }

    pub fn cast<U: Float>(&self) -> RewardSpace<U> {
        RewardSpace { r_min: U::of(self.r_min.as_f64()), r_max: U::of(self.r_max.as_f64()) }
    }
}

impl<T: Float> Default for RewardSpace<T> {
    fn default() -> Self {
        RewardSpace { r_min: -T::one(), r_max: T::one() }
    }
}

/// Per-dimension Gaussian parameters before squashing.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHeadOutput<T> {
    pub mean: Vec<T>,
    pub log_std: Vec<T>,
}

impl<T: Float> GaussianHeadOutput<T> {
    /// Splits a raw network output `[means.., log_std_raw..]`.
    pub fn from_raw(raw: &[T]) -> Self {
        let d = raw.len() / 2;
        GaussianHeadOutput {
            mean: raw[..d].to_vec(),
            log_std: raw[d..2 * d].iter().map(|&r| squash_log_std(r)).collect(),
        }
    }
}

/// Smoothly bounds an unconstrained output into `[LOG_STD_MIN, LOG_STD_MAX]`.
pub fn squash_log_std<T: Float>(raw: T) -> T {
    let lo = T::of(LOG_STD_MIN);
    let hi = T::of(LOG_STD_MAX);
    lo + (hi - lo) * (raw.tanh() + T::one()) / T::of(2.0)
}

/// Derivative of [`squash_log_std`] with respect to its input.
pub fn squash_log_std_slope<T: Float>(raw: T) -> T {
    let t = raw.tanh();
    T::of((LOG_STD_MAX - LOG_STD_MIN) / 2.0) * (T::one() - t * t)
}

fn softplus<T: Float>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - tanh(u)^2)`, evaluated without cancellation for large `|u|`.
fn log_one_minus_tanh_sq<T: Float>(u: T) -> T {
    T::of(2.0) * (T::of(std::f64::consts::LN_2) - u - softplus(T::of(-2.0) * u))
}

fn normal_log_pdf<T: Float>(z: T, log_std: T) -> T {
    T::of(-0.5) * z * z - log_std - T::of(0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// Draws `value = rescale(tanh(mean + std * noise))` and its log-density.
pub fn sample_and_logprob<T: Float>(mean: T, log_std: T, bounds: &RewardSpace<T>, noise: T) -> (T, T) {
    let u = mean + log_std.exp() * noise;
    let value = bounds.rescale(u.tanh());
    let logp = normal_log_pdf(noise, log_std) - log_one_minus_tanh_sq(u) - bounds.half_width().ln();
    (value, logp)
}

/// Sums the per-dimension log-densities of a multi-dimensional head.
pub fn gaussian_sample_and_logprob<T: Float>(
    head: &GaussianHeadOutput<T>,
    bounds: &RewardSpace<T>,
    noise: &[T],
) -> (Vec<T>, T) {
    let mut total = T::zero();
    let values = head
        .mean
        .iter()
        .zip(&head.log_std)
        .zip(noise)
        .map(|((&m, &s), &n)| {
            let (v, lp) = sample_and_logprob(m, s, bounds, n);
            total = total + lp;
            v
        })
        .collect();
    (values, total)
}

/// Derivatives of the reparameterized log-density (noise held fixed) with
/// respect to `mean` and `log_std`.
pub fn logprob_grad<T: Float>(mean: T, log_std: T, noise: T) -> (T, T) {
    let std = log_std.exp();
    let t = (mean + std * noise).tanh();
    let two = T::of(2.0);
    // the Gaussian term is invariant to mean and contributes -1 through log_std
    (two * t, -T::one() + two * t * std * noise)
}

/// Deterministic "mean mode": the squashed mean.
pub fn mean_value<T: Float>(mean: T, bounds: &RewardSpace<T>) -> T {
    bounds.rescale(mean.tanh())
}

/// Log-density of an arbitrary `value` strictly inside the interval.
pub fn log_density<T: Float>(mean: T, log_std: T, bounds: &RewardSpace<T>, value: T) -> T {
    let y = (value - bounds.center()) / bounds.half_width();
    let u = y.atanh();
    let z = (u - mean) / log_std.exp();
    normal_log_pdf(z, log_std) - log_one_minus_tanh_sq(u) - bounds.half_width().ln()
}
