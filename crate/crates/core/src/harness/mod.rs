//! Training runs, baselines, transfer, evaluation and reward maps.

pub mod config;
pub mod eval;
pub mod metrics;
pub mod reward_map;
pub mod train;

pub use config::{EnvConfig, RunConfig, SyncConfig, TrainConfig, Weighting};
pub use eval::{evaluate, evaluate_policy, SuiteEval, TaskEval};
pub use metrics::{MetricRow, RunMetrics};
pub use reward_map::{fidelity, reward_map, Agreement, RewardMap};
pub use train::{train_baseline, train_multitask, transfer, transfer_reference, Baseline, Method, RunOutput, TransferMode};
