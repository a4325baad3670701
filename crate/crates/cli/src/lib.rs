//! Command-line front end: configuration, presets, commands and artifacts.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use eigenmatrix::Execution;

use crate::commands::{CommandError, Outcome};
use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "eigenmatrix", version, about = "Sparse spike recovery with eigenmatrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recover spikes from one synthetic problem or an observations file.
    Recover(CommonArgs),
    /// Sweep noise levels and seeds, writing a summary table and report.
    Experiment(CommonArgs),
    /// Build eigenmatrices and report conditioning, residuals and commutators.
    Diagnose(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable. Later overrides win.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides `out`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed; also replaces `seeds` with this single seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Start from a named preset.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Recover(a) | Command::Experiment(a) | Command::Diagnose(a) => a,
        }
    }
}

/// Merges preset, file, overrides and flags into the effective config.
pub fn effective_config(args: &CommonArgs) -> Result<RunConfig, ConfigError> {
    let mut table = match &args.preset {
        Some(name) => presets::preset(name)?,
        None => toml::Table::new(),
    };
    if let Some(path) = &args.config {
        config::merge(&mut table, config::load_file(path)?);
    }
    for o in &args.overrides {
        let (k, v) = config::parse_override(o)?;
        table.insert(k, v);
    }
    if let Some(seed) = args.seed {
        let s = i64::try_from(seed).map_err(|_| ConfigError::Invalid {
            key: "seed".into(),
            message: format!("must be at most {}, got {seed}", i64::MAX),
        })?;
        table.insert("seed".into(), s.into());
        table.insert("seeds".into(), toml::Value::Array(vec![s.into()]));
    }
    if let Some(out) = &args.out {
        table.insert("out".into(), out.display().to_string().into());
    }
    RunConfig::from_table(table)
}

pub fn execution_for(threads: Option<usize>) -> Execution {
    match threads {
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    }
}

/// Runs one command with an explicit execution mode; the thread pool is
/// configured by the binary.
pub fn run(command: &Command, exec: Execution) -> Result<Outcome, CommandError> {
    let cfg = effective_config(command.args())?;
    match command {
        Command::Recover(_) => commands::cmd_recover(&cfg, exec),
        Command::Experiment(_) => commands::cmd_experiment(&cfg, exec),
        Command::Diagnose(_) => commands::cmd_diagnose(&cfg, exec),
    }
}
