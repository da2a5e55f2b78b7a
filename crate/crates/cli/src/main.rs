//! `cenra`: train, baseline, transfer, eval and reward-map runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cenra::approximator::Checkpoint;
use cenra::harness::{self, Baseline, RunOutput, TrainConfig, TransferMode};
use cenra::{Cra, Dqn, Error, Result};

#[derive(Parser)]
#[command(name = "cenra", version, about = "Multi-task RL with a centralized reward agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    parallel_rollouts: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Plain,
    Relara,
}

#[derive(Subcommand)]
enum Command {
    /// Centralized multi-task training on the configured suite.
    Train(Common),
    /// Plain DQN or per-task reward agents on the configured suite.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        baseline: BaselineArg,
    },
    /// Fresh policy agent on a held-out maze, shaped by a trained reward agent.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cra: PathBuf,
        /// Maze layout file; `env.held_out` when omitted.
        #[arg(long)]
        task: Option<PathBuf>,
        /// Keep the reward agent fixed instead of training it on the new task.
        #[arg(long)]
        freeze: bool,
    },
    /// Greedy evaluation of the policy checkpoints in a run directory.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Run directory holding `dqn_<i>.ckpt`.
        #[arg(long)]
        from: PathBuf,
        /// Evaluate a single maze instead of the configured suite.
        #[arg(long)]
        task: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Per-cell knowledge rewards of a reward agent on one maze.
    RewardMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cra: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, action = clap::ArgAction::Set)]
        has_key: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric { .. } | Error::NotReady(_) => 3,
        Error::Io(_) => 4,
        _ => 2,
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn load_config(common: &Common) -> Result<TrainConfig> {
    let mut c = match &common.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = common.seed {
        c.run.seed = s;
    }
    c.run.parallel_rollouts |= common.parallel_rollouts;
    c.env.suite = c.env.suite.iter().map(|p| absolute(p)).collect();
    c.env.held_out = c.env.held_out.as_deref().map(absolute);
    c.validate()?;
    Ok(c)
}

fn prepare_out(dir: &Path, config: &TrainConfig, invocation: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = format!("# {invocation}\n{}", config.to_toml());
    std::fs::write(dir.join("resolved-config.toml"), text)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn finish(out: &RunOutput, tasks: &[cenra::envsuite::TaskSpec], config: &TrainConfig, dir: &Path) -> Result<()> {
    out.save(dir)?;
    let e = harness::evaluate(&out.agents, tasks, config.run.eval_episodes)?;
    write_json(&dir.join("eval.json"), &e)?;
    for t in &e.tasks {
        println!("{}: {:.3} +/- {:.3}", t.task, t.mean, t.stderr);
    }
    println!("mean return {:.3}", e.mean);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let invocation = std::env::args().collect::<Vec<_>>().join(" ");
    match cli.command {
        Command::Train(common) => {
            let config = load_config(&common)?;
            let suite = config.suite()?;
            prepare_out(&common.out, &config, &invocation)?;
            let out = harness::train_multitask(&config, &suite)?;
            finish(&out, suite.tasks(), &config, &common.out)
        }
        Command::Baseline { common, baseline } => {
            let config = load_config(&common)?;
            let suite = config.suite()?;
            prepare_out(&common.out, &config, &invocation)?;
            let kind = match baseline {
                BaselineArg::Plain => Baseline::Plain,
                BaselineArg::Relara => Baseline::ReLara,
            };
            let out = harness::train_baseline(&config, &suite, kind)?;
            finish(&out, suite.tasks(), &config, &common.out)
        }
        Command::Transfer { common, cra, task, freeze } => {
            let config = load_config(&common)?;
            let task = match &task {
                Some(p) => config.task(p)?,
                None => config.held_out()?,
            };
            let agent = Cra::from_checkpoint(&Checkpoint::load(&cra)?)?;
            prepare_out(&common.out, &config, &invocation)?;
            let mode = if freeze { TransferMode::Frozen } else { TransferMode::Learning };
            let out = harness::transfer(&config, agent, &task, mode)?;
            finish(&out, std::slice::from_ref(&task), &config, &common.out)
        }
        Command::Eval { common, from, task, episodes } => {
            let mut config = load_config(&common)?;
            if let Some(n) = episodes {
                config.run.eval_episodes = n;
            }
            config.validate()?;
            let tasks = match &task {
                Some(p) => vec![config.task(p)?],
                None => config.suite()?.tasks().to_vec(),
            };
            let agents = (0..tasks.len())
                .map(|i| Dqn::from_checkpoint(&Checkpoint::load(from.join(format!("dqn_{i}.ckpt")))?))
                .collect::<Result<Vec<_>>>()?;
            prepare_out(&common.out, &config, &invocation)?;
            let e = harness::evaluate(&agents, &tasks, config.run.eval_episodes)?;
            write_json(&common.out.join("eval.json"), &e)?;
            for t in &e.tasks {
                println!("{}: {:.3} +/- {:.3}", t.task, t.mean, t.stderr);
            }
            println!("mean return {:.3}", e.mean);
            Ok(())
        }
        Command::RewardMap { common, cra, task, has_key } => {
            let config = load_config(&common)?;
            let task = config.task(&task)?;
            let agent = Cra::from_checkpoint(&Checkpoint::load(&cra)?)?;
            prepare_out(&common.out, &config, &invocation)?;
            let map = harness::reward_map(&agent, &task, has_key)?;
            let flag = if has_key { "key" } else { "nokey" };
            let path = common.out.join(format!("reward_map_{}_{flag}.json", task.name));
            std::fs::write(&path, map.to_json() + "\n")?;
            let a = map.agreement;
            println!("{}: oracle agreement {:.1}% ({}/{})", task.name, 100.0 * a.rate, a.agree, a.total);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cenra: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
