use std::fmt::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use flowbench::definition::{validate, WorkflowDefinition};
use flowbench::sim::{sleep, ExecutionTrace, Kernels, PlatformModel, Simulator};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{FileConfig, RunConfig, DEFAULT_BURST, DEFAULT_MODEL, DEFAULT_OUT, DEFAULT_REPS};
use crate::{load_definition, read, shipped, write, CliError, Result};

/// Compute time of the kernel given to functions that have none.
const DEFAULT_KERNEL_US: u64 = 100_000;

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// Definition document; may instead come from `--config`.
    pub definition: Option<PathBuf>,
    /// Builtin model (aws-like, gcp-like, azure-like) or a model file.
    #[arg(long)]
    pub model: Option<String>,
    /// Executions triggered at once per repetition [default: 30].
    #[arg(long)]
    pub burst: Option<usize>,
    /// Independent repetitions of the burst [default: 180].
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parent directory of the run directory [default: runs].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Input payload (JSON file) of every execution.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// TOML file setting any of the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let definition =
            self.definition.clone().or(file.definition).ok_or_else(|| CliError::usage("no definition given"))?;
        let config = RunConfig {
            definition,
            model: self.model.clone().or(file.model).unwrap_or_else(|| DEFAULT_MODEL.into()),
            burst: self.burst.or(file.burst).unwrap_or(DEFAULT_BURST),
            repetitions: self.reps.or(file.reps).unwrap_or(DEFAULT_REPS),
            seed: self.seed.or(file.seed).unwrap_or(0),
            out: self.out.clone().or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
            input: self.input.clone().or(file.input),
        };
        config.check()?;
        Ok(config)
    }
}

/// Builtin model name, or a TOML/JSON model file.
pub fn load_model(spec: &str) -> Result<PlatformModel> {
    if let Ok(m) = PlatformModel::builtin(spec) {
        return Ok(m);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::usage(format!("model `{spec}` is neither a builtin model nor an existing file")));
    }
    PlatformModel::load(path).map_err(|e| CliError::usage(format!("model {spec}: {e}")))
}

/// One trace with the repetition that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub repetition: usize,
    pub trace: ExecutionTrace,
}

#[derive(Serialize)]
struct EventRecord<'a> {
    repetition: usize,
    #[serde(flatten)]
    event: &'a flowbench::sim::FunctionEvent,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub hash: String,
    pub config: RunConfig,
    pub workflow: String,
    pub model: String,
    pub memory_mb: u32,
    /// `benchmark` when the definition is a shipped benchmark, otherwise
    /// `sleep` (every function computes for a fixed time).
    pub kernels: String,
    pub traces: usize,
    pub events: usize,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub summary: String,
}

fn config_hash(defn: &WorkflowDefinition, model: &PlatformModel, config: &RunConfig, input: &Value) -> String {
    let key = json!({
        "definition": defn.to_canonical(),
        "model": model,
        "burst": config.burst,
        "repetitions": config.repetitions,
        "seed": config.seed,
        "input": input,
    });
    let digest = Sha256::digest(serde_json::to_vec(&key).expect("plain data"));
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn repetition_seed(seed: u64, repetition: usize) -> u64 {
    seed.wrapping_add((repetition as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn jsonl<T: Serialize>(items: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("plain data"));
        out.push('\n');
    }
    out
}

/// Runs `repetitions` independent bursts, each on a fresh platform, and
/// writes `run.json`, `invocations.jsonl` and `events.jsonl` to a directory
/// named after the configuration hash. An existing directory of the same
/// configuration is replaced.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulationOutput> {
    simulate(&args.resolve()?)
}

pub fn simulate(config: &RunConfig) -> Result<SimulationOutput> {
    config.check()?;
    let defn = load_definition(&config.definition)?;
    let report = validate(&defn);
    if !report.is_valid() {
        let errors: Vec<String> = report.errors.iter().map(ToString::to_string).collect();
        return Err(CliError::Invalid(errors.join("\n")));
    }
    let model = load_model(&config.model)?;
    let spec = shipped(&defn);
    let (kernels, default_input, kernel_kind) = match spec {
        Some(s) => (s.kernels, s.input, "benchmark"),
        None => {
            let mut k = Kernels::new();
            for f in defn.referenced_functions() {
                let name = defn.function(f).map_or(f, |s| s.kernel_name());
                k.insert(name, sleep(DEFAULT_KERNEL_US));
            }
            (k, json!({}), "sleep")
        }
    };
    let input = match &config.input {
        Some(path) => {
            serde_json::from_str(&read(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => default_input,
    };
    let hash = config_hash(&defn, &model, config, &input);

    let runs: Vec<Vec<ExecutionTrace>> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| {
            let mut sim = Simulator::new(model.clone(), repetition_seed(config.seed, r))
                .map_err(|e| CliError::usage(e.to_string()))?;
            sim.run_burst(&defn, std::slice::from_ref(&input), &kernels, config.burst)
                .map_err(|e| CliError::usage(format!("simulation failed: {e}")))
        })
        .collect::<Result<_>>()?;

    let records: Vec<TraceRecord> = runs
        .into_iter()
        .enumerate()
        .flat_map(|(repetition, traces)| traces.into_iter().map(move |trace| TraceRecord { repetition, trace }))
        .collect();
    let events = jsonl(
        records.iter().flat_map(|r| r.trace.events.iter().map(|event| EventRecord { repetition: r.repetition, event })),
    );
    let manifest = RunManifest {
        hash: hash.clone(),
        config: config.clone(),
        workflow: defn.name.clone(),
        model: model.name.clone(),
        memory_mb: model.memory_mb,
        kernels: kernel_kind.into(),
        traces: records.len(),
        events: records.iter().map(|r| r.trace.events.len()).sum(),
    };

    let dir = config.out.join(&hash);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    }
    write(&dir.join("definition.json"), defn.to_canonical())?;
    write(&dir.join("model.toml"), model.to_toml())?;
    write(&dir.join("invocations.jsonl"), jsonl(records.iter()))?;
    write(&dir.join("events.jsonl"), events)?;
    write(&dir.join("run.json"), serde_json::to_string_pretty(&manifest).expect("plain data") + "\n")?;

    let mut summary = String::new();
    writeln!(
        summary,
        "{}: {} traces ({} x {}) on {}, written to {}",
        defn.name,
        manifest.traces,
        config.repetitions,
        config.burst,
        model.name,
        dir.display()
    )
    .expect("string write");
    Ok(SimulationOutput { dir, manifest, summary })
}
