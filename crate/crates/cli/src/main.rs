//! `metaexp`: train, evaluate, sweep and oracle-check from the command line.
//!
//! Exit codes: 0 ok, 1 oracle failure, 2 usage or config error, 3 numeric
//! fault, 4 i/o failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metaexp::envs::Family;
use metaexp::harness::HarnessError;
use metaexp::metaalgos::{Algo, MetaError};
use metaexp::oracle::Suite;
use metaexp::rlcore::RolloutError;

use config::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config at `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("numeric fault in {0}")]
    Numeric(String),
    #[error("oracle failure:\n{}", .0.join("\n"))]
    Oracle(Vec<String>),
    #[error("a child run exited with status {0}")]
    Child(i32),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Harness(HarnessError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Oracle(_) => 1,
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Numeric(_) => 3,
            CliError::Child(c) => *c,
            CliError::Io(_) | CliError::Harness(_) => 4,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => CliError::Config { key: c.key, reason: c.reason },
            HarnessError::Meta(MetaError::Numeric(f)) => CliError::Numeric(format!("autodiff op `{}` (node {})", f.op, f.node)),
            HarnessError::Meta(MetaError::Gradient(g)) => {
                CliError::Numeric(format!("rlcore clip_grad_norm: non-finite gradient in segment `{}`", g.segment))
            }
            HarnessError::Meta(MetaError::Rollout(RolloutError::NonFinitePolicy { task_id })) => {
                CliError::Numeric(format!("policy forward (rollout on task {task_id})"))
            }
            HarnessError::Contract(msg) => CliError::Usage(msg),
            other => CliError::Harness(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "metaexp", version, about = "Meta-RL experiments: MAML, E-MAML, RL2, E-RL2")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    env: Option<Family>,
    /// TOML file; its keys override the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training env steps per repeat.
    #[arg(long)]
    budget: Option<u64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides { algo: self.algo, env: self.env, seed: self.seed, budget: self.budget }
    }
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Meta-train and write the curve CSV, checkpoint and manifest.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test pool.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also tabulate returns after 0..=N inner steps.
        #[arg(long)]
        sweep_steps: Option<usize>,
    },
    /// Train several algorithms and seeds, one process each.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "maml,emaml,rl2,erl2")]
        algos: Vec<Algo>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Run the finite-difference and brute-force oracle suites.
    Oracle {
        #[arg(long, default_value = "all")]
        suite: Suite,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Cmd::Train(a) => commands::train(a.config.as_deref(), &a.overrides(), a.out),
        Cmd::Eval { run, checkpoint, sweep_steps } => {
            commands::eval(run.config.as_deref(), &run.overrides(), run.out, &checkpoint, sweep_steps)
        }
        Cmd::Sweep { run, algos, seeds } => commands::sweep(run.config.as_deref(), &run.overrides(), run.out, &algos, &seeds),
        Cmd::Oracle { suite } => commands::oracle(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
