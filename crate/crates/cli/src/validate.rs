use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;
use flowbench::definition::validate_with_fanouts;
use flowbench::net::{build_net, check_workflow_net, export_lines};

use crate::{load_definition, shipped, CliError, Result, ShapeArgs};

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Definition document (JSON or YAML).
    pub path: PathBuf,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Also print the instantiated net in the line format of `docs/net-format.md`.
    #[arg(long)]
    pub export_net: bool,
}

/// Validates the definition and the structure of its workflow net. Map widths
/// come from `--fanout`, or from the canonical run of a shipped benchmark;
/// widths above a platform limit produce warnings.
pub fn cmd_validate(args: &ValidateArgs) -> Result<String> {
    let defn = load_definition(&args.path)?;
    let shape = match shipped(&defn) {
        Some(spec) if args.shape.is_empty() => spec.canonical,
        _ => args.shape.shape()?,
    };
    let report = validate_with_fanouts(&defn, &shape.fanouts);
    let mut out = String::new();
    for w in &report.warnings {
        writeln!(out, "warning: {w}").expect("string write");
    }
    if !report.is_valid() {
        let errors: Vec<String> = report.errors.iter().map(|e| format!("error: {e}")).collect();
        return Err(CliError::Invalid(format!("{}{}", out, errors.join("\n"))));
    }
    let net = build_net(&defn, &shape.net_fanouts(&defn)).map_err(|e| CliError::Invalid(format!("net: {e}")))?;
    let structure = check_workflow_net(&net);
    if !structure.is_sound_structure() {
        return Err(CliError::Invalid(format!(
            "{out}error: not a workflow net: {}",
            structure.violations().join("; ")
        )));
    }
    writeln!(
        out,
        "{}: valid ({} phases, {} places, {} transitions)",
        defn.name,
        defn.phases.len(),
        net.places().len(),
        net.transitions().len()
    )
    .expect("string write");
    if args.export_net {
        out.push_str(&export_lines(&net));
    }
    Ok(out)
}
