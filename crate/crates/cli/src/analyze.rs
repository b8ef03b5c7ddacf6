use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use flowbench::cost::{estimate_from_shapes, CostBreakdown, PricingTable};
use flowbench::definition::parse_definition;
use flowbench::metrics::{
    cold_start_stats, critical_path, decomposition_csv, runtime_csv, scaling_csv, scaling_profile, BenchmarkReport,
    ColdStats,
};
use flowbench::sim::ExecutionTrace;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::simulate::{RunManifest, TraceRecord};
use crate::{read, write, CliError, Result};

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Run directory written by `simulate`.
    pub dir: PathBuf,
    /// Pricing table (TOML or JSON); built-in list prices otherwise.
    #[arg(long)]
    pub pricing: Option<PathBuf>,
    /// Where to write the analysis [default: DIR/analysis].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub workflow: String,
    pub model: String,
    pub repetitions: usize,
    pub traces: usize,
    pub runtime: BenchmarkReport,
    pub cold: BTreeMap<String, ColdStats>,
    /// Peak concurrent containers of each repetition.
    pub scaling_max: Vec<usize>,
    /// Absent for models without a platform interpreter.
    pub cost: Option<CostBreakdown>,
    pub out: PathBuf,
}

impl AnalysisReport {
    pub fn summary(&self) -> String {
        let ms = |us: u64| us as f64 / 1_000.0;
        let mut s = String::new();
        let r = &self.runtime;
        writeln!(s, "{} on {}: {} traces in {} repetitions", self.workflow, self.model, self.traces, self.repetitions)
            .expect("string write");
        writeln!(
            s,
            "  runtime ms: p5 {:.3} p25 {:.3} median {:.3} p75 {:.3} p95 {:.3}",
            ms(r.total.p5),
            ms(r.total.p25),
            ms(r.total.p50),
            ms(r.total.p75),
            ms(r.total.p95)
        )
        .expect("string write");
        if let Some(ci) = &r.median_ci {
            writeln!(s, "  median 95% CI ms: [{:.3}, {:.3}]", ci.low / 1_000.0, ci.high / 1_000.0)
                .expect("string write");
        }
        writeln!(s, "  T_C {:.3} ms, T_O {:.3} ms, cold {:.1}%", ms(r.t_c), ms(r.t_o), r.cold_fraction * 100.0)
            .expect("string write");
        if let Some(peak) = self.scaling_max.iter().max() {
            writeln!(s, "  peak containers: {peak}").expect("string write");
        }
        match &self.cost {
            Some(c) => {
                let k = c.per_thousand();
                writeln!(
                    s,
                    "  cost per 1000 executions: ${} (compute {}, invocation {}, orchestration {})",
                    k.total, k.compute, k.invocation, k.orchestration
                )
                .expect("string write");
            }
            None => writeln!(s, "  cost: n/a (generic model)").expect("string write"),
        }
        writeln!(s, "  written to {}", self.out.display()).expect("string write");
        s
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn load_records(dir: &Path) -> Result<Vec<TraceRecord>> {
    let path = dir.join("invocations.jsonl");
    let text = read(&path)?;
    let records = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_json(&path, l))
        .collect::<Result<Vec<TraceRecord>>>()?;
    if records.is_empty() {
        return Err(CliError::usage(format!("{}: no traces", path.display())));
    }
    Ok(records)
}

fn traces_csv(records: &[TraceRecord]) -> Result<String> {
    let mut out = String::from("repetition,invocation,total_us,t_c_us,t_o_us,cold,events\n");
    for r in records {
        let d = critical_path(&r.trace).map_err(|e| CliError::usage(format!("trace {}: {e}", r.trace.invocation)))?;
        let cold = r.trace.events.iter().filter(|e| e.cold).count();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.repetition,
            r.trace.invocation,
            d.total,
            d.t_c,
            d.t_o,
            cold,
            r.trace.events.len()
        )
        .expect("string write");
    }
    Ok(out)
}

/// Summarizes a run directory: per-trace decomposition, runtime and
/// scaling tables, cold starts and, for platform models, cost.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<AnalysisReport> {
    let records = load_records(&args.dir)?;
    let manifest_path = args.dir.join("run.json");
    let manifest: RunManifest = parse_json(&manifest_path, &read(&manifest_path)?)?;
    let defn_path = args.dir.join("definition.json");
    let defn =
        parse_definition(&read(&defn_path)?).map_err(|e| CliError::usage(format!("{}: {e}", defn_path.display())))?;
    let pricing = match &args.pricing {
        Some(p) => PricingTable::load(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?,
        None => PricingTable::default(),
    };

    let traces: Vec<ExecutionTrace> = records.iter().map(|r| r.trace.clone()).collect();
    let runtime = BenchmarkReport::from_traces(&manifest.workflow, &traces)
        .map_err(|e| CliError::usage(format!("analysis failed: {e}")))?;

    let mut by_rep: BTreeMap<usize, Vec<ExecutionTrace>> = BTreeMap::new();
    for r in &records {
        by_rep.entry(r.repetition).or_default().push(r.trace.clone());
    }
    let series: Vec<(String, _)> =
        by_rep.iter().map(|(rep, ts)| (format!("{}/rep{rep}", manifest.model), scaling_profile(ts))).collect();
    let scaling_max = series.iter().map(|(_, p)| p.max()).collect();

    let cost = match traces[0].interpreter.platform() {
        Some(platform) => {
            let memory_gb = Decimal::from(manifest.memory_mb) / Decimal::from(1024);
            Some(
                estimate_from_shapes(&defn, &traces, memory_gb, &pricing, platform)
                    .map_err(|e| CliError::usage(format!("cost: {e}")))?,
            )
        }
        None => None,
    };

    let out = args.out.clone().unwrap_or_else(|| args.dir.join("analysis"));
    write(&out.join("traces.csv"), traces_csv(&records)?)?;
    write(&out.join("runtime.csv"), runtime_csv(std::slice::from_ref(&runtime)))?;
    write(&out.join("decomposition.csv"), decomposition_csv(std::slice::from_ref(&runtime)))?;
    write(&out.join("scaling.csv"), scaling_csv(&series))?;

    let report = AnalysisReport {
        workflow: manifest.workflow,
        model: manifest.model,
        repetitions: by_rep.len(),
        traces: traces.len(),
        runtime,
        cold: cold_start_stats(&traces),
        scaling_max,
        cost,
        out: out.clone(),
    };
    write(&out.join("report.json"), serde_json::to_string_pretty(&report).expect("plain data") + "\n")?;
    Ok(report)
}
