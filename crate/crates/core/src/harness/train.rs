//! The alternating training loop and its baselines.
//!
//! Every outer iteration each task's policy agent takes one environment
//! step and (past burn-in) one update from its own sub-buffer; then, at a
//! barrier, the reward agent is updated on a cross-task batch. The plain
//! baseline drops the knowledge reward; the decentralized baseline gives
//! each task a private reward agent fed only by its own sub-buffer.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{TrainConfig, Weighting};
use super::metrics::{Mean, MetricRow, RunMetrics};
use crate::cra::CraState;
use crate::envsuite::{MazeEnv, Suite, TaskSpec};
use crate::error::{Error, Result};
use crate::policy_agent::{DqnState, Shaping};
use crate::replay::{ConcatReplay, SamplingWeights, SubWriter, Transition};
use crate::sync::{compute_weights, FeatureWindow, ReturnWindow, WeightSnapshot};
use crate::{Cra, Dqn, Observation, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    /// DQN on the environmental reward alone.
    Plain,
    /// One private reward agent per task, no cross-task sharing.
    ReLara,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferMode {
    Frozen,
    Learning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    CenRa(Weighting),
    Baseline(Baseline),
    Transfer(TransferMode),
}

/// Trained agents and the metrics of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub method: Method,
    pub task_names: Vec<String>,
    pub agents: Vec<Dqn>,
    /// The shared reward agent (centralized and transfer runs).
    pub cra: Option<Cra>,
    /// Per-task reward agents of the decentralized baseline.
    pub private_cras: Vec<Cra>,
    pub metrics: RunMetrics,
    /// Every transition the run collected, by task.
    pub replay: ConcatReplay<Real>,
}

impl RunOutput {
    /// Writes `metrics.csv`, `dqn_<i>.ckpt`, and `cra.ckpt` or
    /// `cra_<i>.ckpt` as applicable.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.metrics.save(dir.join("metrics.csv"))?;
        for (i, a) in self.agents.iter().enumerate() {
            a.to_checkpoint().save(dir.join(format!("dqn_{i}.ckpt")))?;
        }
        if let Some(c) = &self.cra {
            c.to_checkpoint().save(dir.join("cra.ckpt"))?;
        }
        for (i, c) in self.private_cras.iter().enumerate() {
            c.to_checkpoint().save(dir.join(format!("cra_{i}.ckpt")))?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct TaskStats {
    episodes: Mean,
    td_loss: Mean,
    r_knw: Mean,
}

struct Worker {
    task_id: usize,
    env: MazeEnv,
    agent: Dqn,
    rng: ChaCha8Rng,
    obs: Observation,
    episode_return: f64,
    features: FeatureWindow,
    returns: ReturnWindow,
    stats: TaskStats,
}

impl Worker {
    /// One environment step and, past burn-in, one policy update.
    fn step(
        &mut self,
        sub: &mut SubWriter<'_, Real>,
        cra: Option<&Cra>,
        lambda: Real,
        config: &TrainConfig,
        step: usize,
    ) -> Result<()> {
        let (action, feature) = self.agent.act(&self.obs, &mut self.rng)?;
        let res = self.env.step::<Real>(action)?;
        let r_knw = match cra {
            Some(c) => {
                let r = c.sample_reward(&self.obs, action, &mut self.rng)?;
                self.stats.r_knw.add(r as f64);
                r
            }
            None => 0.0,
        };
        let next_action = self.agent.greedy(&res.next_obs)?;
        sub.push(Transition {
            task_id: self.task_id,
            obs: self.obs.clone(),
            action,
            next_obs: res.next_obs.clone(),
            next_action,
            r_env: res.reward,
            r_knw_stored: r_knw,
            done: res.done,
        })?;
        self.features.push(feature.iter().map(|&v| v as f64).collect());
        self.returns.push(res.reward as f64);
        self.episode_return += res.reward as f64;
        if res.done || res.truncated {
            self.stats.episodes.add(self.episode_return);
            self.episode_return = 0.0;
            self.obs = self.env.reset(step as u64);
        } else {
            self.obs = res.next_obs;
        }
        self.agent.epsilon.advance();
        if step >= config.dqn.burn_in {
            let batch = sub.buffer().sample(config.dqn.batch_size, &mut self.rng)?;
            let shaping = match cra {
                Some(c) => Shaping::Knowledge { source: c, lambda },
                None => Shaping::None,
            };
            let d = self.agent.update(&batch, shaping, &config.dqn)?;
            self.stats.td_loss.add(d.td_loss);
        }
        Ok(())
    }
}

struct Learner {
    cra: Cra,
    rng: ChaCha8Rng,
    critic_loss: Mean,
    actor_loss: Mean,
}

impl Learner {
    fn new(cra: Cra, rng: ChaCha8Rng) -> Self {
        Learner { cra, rng, critic_loss: Mean::default(), actor_loss: Mean::default() }
    }

    fn update(&mut self, replay: &ConcatReplay<Real>, weights: &SamplingWeights, config: &TrainConfig) -> Result<()> {
        let batch = replay.sample_cra(weights, config.cra.batch_size, &mut self.rng)?;
        let d = self.cra.update(&batch, &config.cra, &mut self.rng)?;
        self.critic_loss.add(d.critic_loss);
        if let Some(a) = d.actor_loss {
            self.actor_loss.add(a);
        }
        Ok(())
    }
}

enum Knowledge {
    None,
    Shared { learner: Learner, learn: bool, weighting: Weighting },
    Private(Vec<Learner>),
}

impl Knowledge {
    fn for_task(&self, task: usize) -> Option<&Cra> {
        match self {
            Knowledge::None => None,
            Knowledge::Shared { learner, .. } => Some(&learner.cra),
            Knowledge::Private(ls) => Some(&ls[task].cra),
        }
    }
}

struct Engine<'c> {
    config: &'c TrainConfig,
    workers: Vec<Worker>,
    replay: ConcatReplay<Real>,
    knowledge: Knowledge,
    /// Weights behind the most recent cross-task batch.
    last_weights: Option<WeightSnapshot>,
    metrics: RunMetrics,
    logs_weights: bool,
}

impl<'c> Engine<'c> {
    fn workers(config: &TrainConfig, tasks: &[TaskSpec], steps: usize, master: &mut ChaCha8Rng) -> Result<Vec<Worker>> {
        let k = config.sync.window;
        tasks
            .iter()
            .enumerate()
            .map(|(task_id, task)| {
                let mut rng = ChaCha8Rng::seed_from_u64(master.random());
                let schedule = config.dqn.epsilon_schedule(steps);
                let agent = DqnState::new(crate::envsuite::OBS_DIM, &config.dqn, schedule, &mut rng)?;
                let mut env = MazeEnv::new(task.clone())?;
                let obs = env.reset(0);
                Ok(Worker {
                    task_id,
                    env,
                    agent,
                    rng,
                    obs,
                    episode_return: 0.0,
                    features: FeatureWindow::new(k),
                    returns: ReturnWindow::new(k),
                    stats: TaskStats::default(),
                })
            })
            .collect()
    }

    fn new_cra(config: &TrainConfig, master: &mut ChaCha8Rng) -> Result<Learner> {
        let mut rng = ChaCha8Rng::seed_from_u64(master.random());
        let cra = CraState::new(crate::envsuite::OBS_DIM, &config.cra, &mut rng)?;
        Ok(Learner::new(cra, rng))
    }

    fn new(config: &'c TrainConfig, tasks: &[TaskSpec], steps: usize, method: Method, loaded: Option<Cra>) -> Result<Self> {
        config.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(config.run.seed);
        let workers = Self::workers(config, tasks, steps, &mut master)?;
        let knowledge = match method {
            Method::Baseline(Baseline::Plain) => Knowledge::None,
            Method::Baseline(Baseline::ReLara) => {
                Knowledge::Private((0..tasks.len()).map(|_| Self::new_cra(config, &mut master)).collect::<Result<_>>()?)
            }
            Method::CenRa(weighting) => {
                Knowledge::Shared { learner: Self::new_cra(config, &mut master)?, learn: true, weighting }
            }
            Method::Transfer(mode) => {
                let cra = loaded.ok_or_else(|| Error::Usage("transfer needs a reward agent".into()))?;
                if cra.obs_dim() != crate::envsuite::OBS_DIM {
                    return Err(Error::Config(format!(
                        "reward agent expects {}-dim observations, task gives {}",
                        cra.obs_dim(),
                        crate::envsuite::OBS_DIM
                    )));
                }
                let rng = ChaCha8Rng::seed_from_u64(master.random());
                Knowledge::Shared {
                    learner: Learner::new(cra, rng),
                    learn: mode == TransferMode::Learning,
                    weighting: Weighting::Combined,
                }
            }
        };
        let capacity = config.dqn.buffer_capacity.min(steps.max(1));
        Ok(Engine {
            config,
            workers,
            replay: ConcatReplay::new(tasks.len(), capacity, config.cra.reward_space())?,
            knowledge,
            last_weights: None,
            metrics: RunMetrics::default(),
            logs_weights: matches!(method, Method::CenRa(_)),
        })
    }

    fn rollouts(&mut self, step: usize) -> Result<()> {
        let lambda = self.config.run.lambda as Real;
        let config = self.config;
        let knowledge = &self.knowledge;
        let writers = self.replay.writers();
        if config.run.parallel_rollouts && self.workers.len() > 1 {
            std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .workers
                    .iter_mut()
                    .zip(writers)
                    .map(|(w, mut sub)| {
                        let cra = knowledge.for_task(w.task_id);
                        s.spawn(move || w.step(&mut sub, cra, lambda, config, step))
                    })
                    .collect();
                handles.into_iter().try_for_each(|h| h.join().expect("rollout thread panicked"))
            })
        } else {
            for (w, mut sub) in self.workers.iter_mut().zip(writers) {
                let cra = knowledge.for_task(w.task_id);
                w.step(&mut sub, cra, lambda, config, step)?;
            }
            Ok(())
        }
    }

    fn weights(&self, weighting: Weighting) -> Result<(WeightSnapshot, SamplingWeights)> {
        let n = self.workers.len();
        let features: Vec<&FeatureWindow> = self.workers.iter().map(|w| &w.features).collect();
        let returns: Vec<&ReturnWindow> = self.workers.iter().map(|w| &w.returns).collect();
        let snap = compute_weights(&features, &returns, &self.config.sync.weights())?;
        let used = match weighting {
            Weighting::Combined => snap.combined.clone(),
            Weighting::Similarity => snap.similarity.clone(),
            Weighting::Performance => snap.performance.clone(),
            Weighting::Uniform => SamplingWeights::uniform(n),
        };
        Ok((snap, used))
    }

    fn reward_updates(&mut self, step: usize) -> Result<()> {
        let c = &self.config.cra;
        if step < c.burn_in || !step.is_multiple_of(c.update_period) {
            return Ok(());
        }
        let n = self.workers.len();
        match &self.knowledge {
            Knowledge::Shared { learn: true, weighting, .. } => {
                let (snap, used) = self.weights(*weighting)?;
                let shown = WeightSnapshot { combined: used.clone(), ..snap };
                self.last_weights = Some(shown);
                if let Knowledge::Shared { learner, .. } = &mut self.knowledge {
                    learner.update(&self.replay, &used, self.config)?;
                }
            }
            Knowledge::Private(_) => {
                if let Knowledge::Private(ls) = &mut self.knowledge {
                    for (i, l) in ls.iter_mut().enumerate() {
                        l.update(&self.replay, &SamplingWeights::one_hot(n, i), self.config)?;
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn log(&mut self, step: usize) {
        let n = self.workers.len();
        let shared_losses = match &mut self.knowledge {
            Knowledge::Shared { learner, .. } => Some((learner.critic_loss.take(), learner.actor_loss.take())),
            _ => None,
        };
        let uniform = 1.0 / n as f64;
        for (i, w) in self.workers.iter_mut().enumerate() {
            let (critic, actor) = match (&mut self.knowledge, shared_losses) {
                (Knowledge::Private(ls), _) => (ls[i].critic_loss.take(), ls[i].actor_loss.take()),
                (_, Some(l)) => l,
                _ => (None, None),
            };
            let (w_sim, w_per, w_all) = if self.logs_weights {
                match &self.last_weights {
                    Some(s) => (
                        Some(s.similarity.as_slice()[i]),
                        Some(s.performance.as_slice()[i]),
                        Some(s.combined.as_slice()[i]),
                    ),
                    None => (Some(uniform), Some(uniform), Some(uniform)),
                }
            } else {
                (None, None, None)
            };
            self.metrics.push(MetricRow {
                step,
                task_id: i,
                episodic_return: w.stats.episodes.take(),
                td_loss: w.stats.td_loss.take(),
                cra_critic_loss: critic,
                cra_actor_loss: actor,
                mean_r_knw: w.stats.r_knw.take(),
                w_sim,
                w_per,
                w: w_all,
                epsilon: w.agent.epsilon.value(),
            });
        }
    }

    fn run(mut self, steps: usize, method: Method, task_names: Vec<String>) -> Result<RunOutput> {
        for step in 1..=steps {
            self.rollouts(step)?;
            self.reward_updates(step)?;
            if step % self.config.run.log_interval == 0 || step == steps {
                self.log(step);
            }
        }
        let (cra, private_cras) = match self.knowledge {
            Knowledge::None => (None, Vec::new()),
            Knowledge::Shared { learner, .. } => (Some(learner.cra), Vec::new()),
            Knowledge::Private(ls) => (None, ls.into_iter().map(|l| l.cra).collect()),
        };
        Ok(RunOutput {
            method,
            task_names,
            agents: self.workers.into_iter().map(|w| w.agent).collect(),
            cra,
            private_cras,
            metrics: self.metrics,
            replay: self.replay,
        })
    }
}

fn run_tasks(config: &TrainConfig, tasks: &[TaskSpec], steps: usize, method: Method, cra: Option<Cra>) -> Result<RunOutput> {
    let names = tasks.iter().map(|t| t.name.clone()).collect();
    Engine::new(config, tasks, steps, method, cra)?.run(steps, method, names)
}

/// Centralized training with the sampling weight chosen by
/// `config.sync.weighting`.
pub fn train_multitask(config: &TrainConfig, suite: &Suite) -> Result<RunOutput> {
    let method = Method::CenRa(config.sync.weighting);
    run_tasks(config, suite.tasks(), config.run.total_steps, method, None)
}

pub fn train_baseline(config: &TrainConfig, suite: &Suite, kind: Baseline) -> Result<RunOutput> {
    run_tasks(config, suite.tasks(), config.run.total_steps, Method::Baseline(kind), None)
}

/// Trains a fresh policy agent on `task` for the transfer budget, shaped by
/// a pretrained reward agent that is either frozen or kept learning on the
/// new task's experience alone.
pub fn transfer(config: &TrainConfig, cra: Cra, task: &TaskSpec, mode: TransferMode) -> Result<RunOutput> {
    let steps = config.run.transfer_budget();
    run_tasks(config, std::slice::from_ref(task), steps, Method::Transfer(mode), Some(cra))
}

/// Plain DQN on `task` with the transfer budget, the reference for transfer.
pub fn transfer_reference(config: &TrainConfig, task: &TaskSpec) -> Result<RunOutput> {
    let steps = config.run.transfer_budget();
    run_tasks(config, std::slice::from_ref(task), steps, Method::Baseline(Baseline::Plain), None)
}
