//! Run configuration, read from TOML with one table per component.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cra::CraConfig;
use crate::envsuite::{load_task, Suite, TaskSpec, DEFAULT_MAX_STEPS};
use crate::error::{Error, Result};
use crate::policy_agent::DqnConfig;
use crate::sync::{WeightConfig, DEFAULT_ALPHA, DEFAULT_FLOOR, DEFAULT_WINDOW};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Environment steps per task.
    pub total_steps: usize,
    /// Steps on a held-out task; half of `total_steps` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transfer_steps: Option<usize>,
    pub eval_episodes: usize,
    /// Steps between metric rows.
    pub log_interval: usize,
    pub lambda: f64,
    pub parallel_rollouts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            total_steps: 150_000,
            transfer_steps: None,
            eval_episodes: 100,
            log_interval: 1000,
            lambda: 0.5,
            parallel_rollouts: false,
        }
    }
}

impl RunConfig {
    pub fn transfer_budget(&self) -> usize {
        self.transfer_steps.unwrap_or(self.total_steps / 2)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Training mazes. Relative paths resolve against the config file.
    pub suite: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

/// Which sampling weight steers the reward agent's cross-task batches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Combined,
    Similarity,
    Performance,
    /// Neither weight: every task gets `1 / N`.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    pub alpha: f64,
    pub window: usize,
    pub floor_epsilon: f64,
    pub weighting: Weighting,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            alpha: DEFAULT_ALPHA,
            window: DEFAULT_WINDOW,
            floor_epsilon: DEFAULT_FLOOR,
            weighting: Weighting::Combined,
        }
    }
}

impl SyncConfig {
    pub fn weights(&self) -> WeightConfig {
        WeightConfig { alpha: self.alpha, window: self.window, floor_epsilon: self.floor_epsilon }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub run: RunConfig,
    pub env: EnvConfig,
    pub cra: CraConfig,
    pub dqn: DqnConfig,
    pub sync: SyncConfig,
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Parses a config file and anchors its relative paths at the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        c.env.suite = c.env.suite.iter().map(|p| base.join(p)).collect();
        c.env.held_out = c.env.held_out.as_ref().map(|p| base.join(p));
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.total_steps == 0 || r.log_interval == 0 || r.eval_episodes == 0 {
            return Err(Error::Config("total_steps, log_interval and eval_episodes must be >= 1".into()));
        }
        if r.transfer_steps == Some(0) {
            return Err(Error::Config("transfer_steps must be >= 1".into()));
        }
        if !(r.lambda > 0.0 && r.lambda <= 1.0) {
            return Err(Error::Config(format!("lambda {} outside (0, 1]", r.lambda)));
        }
        if self.env.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be >= 1".into()));
        }
        self.cra.validate()?;
        self.dqn.validate()?;
        self.sync.weights().validate()
    }

    pub fn max_steps(&self) -> usize {
        self.env.max_steps.unwrap_or(DEFAULT_MAX_STEPS)
    }

    pub fn suite(&self) -> Result<Suite> {
        if self.env.suite.is_empty() {
            return Err(Error::Config("env.suite lists no mazes".into()));
        }
        Suite::load(&self.env.suite, self.max_steps())
    }

    pub fn task(&self, path: &Path) -> Result<TaskSpec> {
        load_task(path, self.max_steps())
    }

    pub fn held_out(&self) -> Result<TaskSpec> {
        let p = self.env.held_out.as_ref().ok_or_else(|| Error::Config("env.held_out is not set".into()))?;
        self.task(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
