//! Greedy evaluation of trained policy agents.

use serde::Serialize;

use crate::envsuite::{ActionId, Cell, MazeEnv, TaskSpec};
use crate::error::{Error, Result};
use crate::{Dqn, Observation};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskEval {
    pub task: String,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(episodes)`.
    pub stderr: f64,
    pub episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteEval {
    pub tasks: Vec<TaskEval>,
    pub mean: f64,
}

/// What a policy sees each step: the observation, and for scripted
/// policies the agent's cell and key flag.
pub struct PolicyInput<'a> {
    pub obs: &'a Observation,
    pub cell: Cell,
    pub has_key: bool,
}

pub fn evaluate_policy<F>(task: &TaskSpec, episodes: usize, mut policy: F) -> Result<TaskEval>
where
    F: FnMut(PolicyInput<'_>) -> Result<ActionId>,
{
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs >= 1 episode".into()));
    }
    let mut env = MazeEnv::new(task.clone())?;
    let mut returns = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut obs: Observation = env.reset(episode as u64);
        let mut total = 0.0;
        loop {
            let a = policy(PolicyInput { obs: &obs, cell: env.agent(), has_key: env.has_key() })?;
            let r = env.step(a)?;
            total += r.reward as f64;
            if r.done || r.truncated {
                break;
            }
            obs = r.next_obs;
        }
        returns.push(total);
    }
    Ok(summarize(&task.name, &returns))
}

fn summarize(name: &str, returns: &[f64]) -> TaskEval {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let stderr = if returns.len() > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    TaskEval { task: name.to_string(), mean, stderr, episodes: returns.len() }
}

/// Greedy (epsilon 0) returns of `agents[i]` on `tasks[i]`.
pub fn evaluate(agents: &[Dqn], tasks: &[TaskSpec], episodes: usize) -> Result<SuiteEval> {
    if agents.len() != tasks.len() || tasks.is_empty() {
        return Err(Error::Usage(format!("{} agents for {} tasks", agents.len(), tasks.len())));
    }
    let tasks = agents
        .iter()
        .zip(tasks)
        .map(|(a, t)| evaluate_policy(t, episodes, |p| a.greedy(p.obs)))
        .collect::<Result<Vec<_>>>()?;
    let mean = tasks.iter().map(|t| t.mean).sum::<f64>() / tasks.len() as f64;
    Ok(SuiteEval { tasks, mean })
}
