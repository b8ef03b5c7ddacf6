use std::fmt::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use flowbench::transcribe::{transcribe, TranscribeError};
use flowbench::Platform;

use crate::{load_definition, shipped, write, CliError, Result, ShapeArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlatformChoice {
    Aws,
    Google,
    Azure,
    All,
}

impl PlatformChoice {
    pub fn platforms(self) -> Vec<Platform> {
        match self {
            PlatformChoice::Aws => vec![Platform::Aws],
            PlatformChoice::Google => vec![Platform::Google],
            PlatformChoice::Azure => vec![Platform::Azure],
            PlatformChoice::All => Platform::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TranscribeArgs {
    /// Definition document (JSON or YAML).
    pub path: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub platform: PlatformChoice,
    /// Output directory; one subdirectory per platform.
    #[arg(long, default_value = "transcribed")]
    pub out: PathBuf,
    #[command(flatten)]
    pub shape: ShapeArgs,
}

/// Writes the orchestration documents and prints the transition census of
/// each. The census needs the execution shape: `--fanout`/`--route`/`--fail`,
/// or the canonical run of a shipped benchmark.
pub fn cmd_transcribe(args: &TranscribeArgs) -> Result<String> {
    let defn = load_definition(&args.path)?;
    let report = flowbench::definition::validate(&defn);
    if !report.is_valid() {
        let errors: Vec<String> = report.errors.iter().map(ToString::to_string).collect();
        return Err(CliError::Invalid(errors.join("\n")));
    }
    let shape = match shipped(&defn) {
        Some(spec) if args.shape.is_empty() => spec.canonical,
        _ => args.shape.shape()?,
    };
    let mut out = String::new();
    for platform in args.platform.platforms() {
        let program = transcribe(&defn, platform).map_err(|e| match e {
            TranscribeError::Untranscribable { phase, reason } => {
                CliError::usage(format!("{platform}: phase `{phase}` cannot be transcribed: {reason}"))
            }
            other => CliError::usage(format!("{platform}: {other}")),
        })?;
        let dir = args.out.join(platform.as_str());
        for (name, content) in program.files() {
            write(&dir.join(&name), content)?;
        }
        writeln!(out, "{platform}: {} states, written to {}", program.census.state_count, dir.display())
            .expect("string write");
        match program.census.transitions_per_execution(&shape) {
            Ok(count) if platform == Platform::Google => writeln!(
                out,
                "  transitions/exec: {} ({} internal, {} external)",
                count.total(),
                count.internal,
                count.external
            ),
            Ok(count) => writeln!(out, "  transitions/exec: {}", count.total()),
            Err(e) => writeln!(out, "  transitions/exec: unknown ({e})"),
        }
        .expect("string write");
        for note in &program.notes {
            writeln!(out, "  note [{}]: {}", note.phase, note.message).expect("string write");
        }
    }
    Ok(out)
}
