//! Operator entry points for nppx: train the expert tree, roll it out, run
//! scripted fleets, serve live sessions and analyze logs.
//!
//! Every command prints one JSON status line on stdout and exits with a code
//! from [`CliError::exit_code`].

pub mod api;
mod commands;
mod staging;

pub use commands::run;
pub use staging::Staging;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nppx_core::Condition;
use serde::Serialize;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "nppx", version, about = "Explained nuclear-plant operator sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config files layered over the defaults, in order.
    #[arg(long = "config", global = true)]
    pub configs: Vec<PathBuf>,
    /// Seed override; its meaning depends on the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the expert tree and write it with per-episode metrics.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode with the tree's greedy policy, or uniformly random
    /// actions when no tree is given.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Defaults to the training episode length.
        #[arg(long)]
        steps: Option<usize>,
        /// Directory for the step trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the session wire API over HTTP.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Directory for session logs.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Run seeded scripted-user fleets on a virtual clock.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// One output directory per condition.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "cxai,axai")]
        condition: Vec<ConditionArg>,
        #[arg(long, default_value_t = 10)]
        fleet_size: usize,
        /// Policy kind; defaults to the configured one.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Summarize sealed session logs into a report and CSV tables.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Directories searched recursively for `.jsonl` logs.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        slices: usize,
        #[arg(long, value_enum, default_value = "condition")]
        group_by: GroupBy,
    },
    /// Check config files and print the merged result.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    Cxai,
    Axai,
    #[value(name = "self")]
    SelfTaught,
}

impl From<ConditionArg> for Condition {
    fn from(c: ConditionArg) -> Self {
        match c {
            ConditionArg::Cxai => Condition::Cxai,
            ConditionArg::Axai => Condition::Axai,
            ConditionArg::SelfTaught => Condition::SelfTaught,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupBy {
    Condition,
    /// One group per input directory.
    Dir,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Training(String),
    #[error("{0}")]
    Protocol(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Training(_) => 3,
            CliError::Protocol(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

/// The line printed when a command finishes.
#[derive(Debug, Serialize)]
pub struct Status {
    pub status: &'static str,
    pub command: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Rollout { .. } => "rollout",
            Command::Serve { .. } => "serve",
            Command::Simulate { .. } => "simulate",
            Command::Analyze { .. } => "analyze",
            Command::ValidateConfig { .. } => "validate-config",
        }
    }
}
