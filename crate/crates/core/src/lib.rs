//! Multi-task reinforcement learning with a centralized reward agent.
//!
//! A single reward agent learns a bounded dense "knowledge reward" over
//! (state, action) pairs from the experience of several sparse-reward
//! tasks, and each task's own DQN policy agent trains on its environmental
//! reward plus the scaled knowledge reward. Cross-task batches for the
//! reward agent are apportioned by a sampling weight that favours outlier
//! and lagging tasks.
//!
//! The numeric core is generic over [`Float`]; the aliases below fix the
//! scalar to `f32`, the precision used for training runs.

pub mod approximator;
pub mod cra;
pub mod envsuite;
pub mod error;
pub mod float;
pub mod harness;
pub mod policy_agent;
pub mod replay;
pub mod sync;

pub use error::{Error, Result};
pub use float::Float;

/// Scalar used by training runs and the command-line driver.
pub type Real = f32;

pub type Cra = cra::CraState<Real>;
pub type Dqn = policy_agent::DqnState<Real>;

pub type Transition = replay::Transition<Real>;
pub type ConcatReplay = replay::ConcatReplay<Real>;
pub type SamplingWeights = replay::SamplingWeights;
pub type Observation = envsuite::Observation<Real>;
pub type RewardSpace = approximator::RewardSpace<Real>;
