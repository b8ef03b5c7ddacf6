//! Command-line front end: validate, transcribe, simulate and analyze
//! workflow definitions.

mod analyze;
mod config;
mod simulate;
mod transcribe;
mod validate;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use analyze::{cmd_analyze, AnalysisReport, AnalyzeArgs};
pub use config::{FileConfig, RunConfig};
pub use simulate::{cmd_simulate, SimulateArgs, SimulationOutput};
pub use transcribe::{cmd_transcribe, PlatformChoice, TranscribeArgs};
pub use validate::{cmd_validate, ValidateArgs};

#[derive(Debug, Error)]
pub enum CliError {
    /// The definition or its net is invalid.
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 1 validation failure, 2 usage or environment error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

pub(crate) fn write(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_owned(), source })?;
    }
    std::fs::write(path, content).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

#[derive(Debug, Parser)]
#[command(name = "flowbench", version, about = "Portable serverless workflow toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a definition and its workflow net.
    Validate(ValidateArgs),
    /// Generate platform orchestration documents.
    Transcribe(TranscribeArgs),
    /// Simulate bursts of executions and write trace files.
    Simulate(SimulateArgs),
    /// Summarize a trace directory: runtimes, overhead, scaling and cost.
    Analyze(AnalyzeArgs),
}

/// Execution shape flags shared by commands that need map widths and
/// switch routes.
#[derive(Debug, Clone, Default, Args)]
pub struct ShapeArgs {
    /// Width of a map or loop phase, as `phase=n`.
    #[arg(long = "fanout", value_name = "PHASE=N")]
    pub fanouts: Vec<String>,
    /// Target taken at a switch, as `switch=target`.
    #[arg(long = "route", value_name = "SWITCH=TARGET")]
    pub routes: Vec<String>,
    /// Phase whose function fails.
    #[arg(long = "fail", value_name = "PHASE")]
    pub failed: Vec<String>,
}

impl ShapeArgs {
    pub fn is_empty(&self) -> bool {
        self.fanouts.is_empty() && self.routes.is_empty() && self.failed.is_empty()
    }

    pub fn shape(&self) -> Result<flowbench::transcribe::ExecutionShape> {
        let mut shape = flowbench::transcribe::ExecutionShape::default();
        for f in &self.fanouts {
            let (phase, n) = split_pair(f, "--fanout")?;
            let n: usize = n.parse().map_err(|_| CliError::usage(format!("--fanout {f}: width is not a number")))?;
            shape = shape.with_fanout(phase, n);
        }
        for r in &self.routes {
            let (switch, target) = split_pair(r, "--route")?;
            shape = shape.with_route(switch, target);
        }
        for p in &self.failed {
            shape = shape.with_failure(p);
        }
        Ok(shape)
    }
}

fn split_pair<'a>(text: &'a str, flag: &str) -> Result<(&'a str, &'a str)> {
    text.split_once('=')
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| CliError::usage(format!("{flag} {text}: expected NAME=VALUE")))
}

/// Loads a definition; syntax and schema errors are validation failures.
pub(crate) fn load_definition(path: &Path) -> Result<flowbench::definition::WorkflowDefinition> {
    let text = read(path)?;
    flowbench::definition::parse_definition(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// The shipped benchmark whose definition equals `defn`, if any.
pub(crate) fn shipped(defn: &flowbench::definition::WorkflowDefinition) -> Option<flowbench::bench::BenchmarkSpec> {
    flowbench::bench::by_name(&defn.name).filter(|s| s.definition == *defn)
}

/// Runs one command and returns the text to print.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Transcribe(a) => cmd_transcribe(&a),
        Command::Simulate(a) => cmd_simulate(&a).map(|o| o.summary),
        Command::Analyze(a) => cmd_analyze(&a).map(|r| r.summary()),
    }
}
