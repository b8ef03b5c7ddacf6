//! Benchmark workflows with executable or stub kernels at desk scale.
//!
//! Six applications (video analysis, trip booking, MapReduce, ExCamera,
//! machine learning, 1000Genome) and four microbenchmarks. Every definition
//! also ships as a standalone document under `benchmarks/`.

mod apps;
mod micro;
mod stubs;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::definition::{parse_definition, WorkflowDefinition};
use crate::sim::{ExecutionTrace, FunctionEvent, Kernels};
use crate::transcribe::ExecutionShape;
use crate::Platform;

pub use apps::{corpus, mapreduce, trip_booking, word_count};
pub use micro::{function_chain, parallel_sleep, selfish_detour_bench, storage_io};
pub use stubs::{excamera, genome, ml, stub_benchmarks, video, StubScale};

/// Shape of one execution: function executions, the widest stage and the
/// number of sequential stages on the longest path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Structure {
    pub function_count: usize,
    pub parallelism: usize,
    pub critical_path_length: usize,
}

impl Structure {
    pub const fn new(function_count: usize, parallelism: usize, critical_path_length: usize) -> Structure {
        Structure { function_count, parallelism, critical_path_length }
    }

    /// Structure of a simulated execution, from the stage paths of its
    /// function events.
    pub fn of_trace(trace: &ExecutionTrace) -> Structure {
        let paths: Vec<(Vec<u32>, &FunctionEvent)> = trace.events.iter().map(|e| (e.stage_path(), e)).collect();
        let refs: Vec<&(Vec<u32>, &FunctionEvent)> = paths.iter().collect();
        let (width, length) = stages(&refs, 0);
        Structure { function_count: trace.events.len(), parallelism: width, critical_path_length: length }
    }
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.function_count, self.parallelism, self.critical_path_length)
    }
}

type Staged<'a> = (Vec<u32>, &'a FunctionEvent);

/// `(widest stage, number of stages)`; branches of a parallel stage run side
/// by side, so their widths add up and the longest branch counts.
fn stages(events: &[&Staged<'_>], depth: usize) -> (usize, usize) {
    let mut by_stage: BTreeMap<u32, Vec<&Staged<'_>>> = BTreeMap::new();
    for e in events {
        if let Some(&s) = e.0.get(depth) {
            by_stage.entry(s).or_default().push(e);
        }
    }
    let mut widest = 0;
    let mut length = 0;
    for members in by_stage.values() {
        let flat = members.iter().filter(|e| e.0.len() == depth + 1).count();
        let mut branches: BTreeMap<u32, Vec<&Staged<'_>>> = BTreeMap::new();
        for e in members.iter().filter(|e| e.0.len() > depth + 1) {
            branches.entry(e.0[depth + 1]).or_default().push(e);
        }
        let inner: Vec<(usize, usize)> = branches.values().map(|b| stages(b, depth + 2)).collect();
        let side_by_side: usize = inner.iter().map(|b| b.0).sum();
        widest = widest.max(flat).max(side_by_side);
        length += usize::from(flat > 0).max(inner.iter().map(|b| b.1).max().unwrap_or(0));
    }
    (widest, length)
}

/// A benchmark ready to simulate.
#[derive(Clone)]
pub struct BenchmarkSpec {
    pub name: String,
    pub definition: WorkflowDefinition,
    pub params: BTreeMap<String, Value>,
    pub kernels: Kernels,
    /// Input of the canonical execution.
    pub input: Value,
    /// Map widths, switch routes and failures of the canonical execution.
    pub canonical: ExecutionShape,
    /// Structure of the canonical execution for these parameters.
    pub expected: Structure,
    /// Structure published for the benchmark at its reference parameters.
    pub published: Option<Structure>,
    /// Published per-execution transitions on AWS and Google, if any.
    pub reported_transitions: Option<(u64, u64)>,
    /// Known differences between our census and `reported_transitions`.
    pub census_deltas: Vec<DocumentedDelta>,
    pub memory_mb: u32,
}

/// A documented gap between the computed and the published transition count
/// on one platform: `computed = reported + delta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentedDelta {
    pub platform: Platform,
    pub delta: i64,
    pub reason: &'static str,
}

impl BenchmarkSpec {
    /// Published count on `platform` adjusted by any documented delta.
    pub fn expected_transitions(&self, platform: Platform) -> Option<u64> {
        let (aws, google) = self.reported_transitions?;
        let reported = match platform {
            Platform::Aws => aws,
            Platform::Google => google,
            Platform::Azure => return None,
        };
        let delta: i64 = self.census_deltas.iter().filter(|d| d.platform == platform).map(|d| d.delta).sum();
        Some((reported as i64 + delta) as u64)
    }
}

impl std::fmt::Debug for BenchmarkSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("expected", &self.expected)
            .finish_non_exhaustive()
    }
}

/// Definition documents shipped under `benchmarks/`, by file stem.
pub const DOCUMENTS: [(&str, &str); 10] = [
    ("mapreduce", include_str!("../../../../benchmarks/mapreduce.json")),
    ("trip_booking", include_str!("../../../../benchmarks/trip_booking.json")),
    ("function_chain", include_str!("../../../../benchmarks/function_chain.json")),
    ("parallel_sleep", include_str!("../../../../benchmarks/parallel_sleep.json")),
    ("storage_io", include_str!("../../../../benchmarks/storage_io.json")),
    ("selfish_detour", include_str!("../../../../benchmarks/selfish_detour.json")),
    ("video", include_str!("../../../../benchmarks/video.json")),
    ("excamera", include_str!("../../../../benchmarks/excamera.json")),
    ("ml", include_str!("../../../../benchmarks/ml.json")),
    ("genome", include_str!("../../../../benchmarks/genome.json")),
];

pub(crate) fn document(name: &str) -> WorkflowDefinition {
    let text = DOCUMENTS.iter().find(|d| d.0 == name).map(|d| d.1).expect("shipped benchmark");
    parse_definition(text).expect("shipped benchmarks parse")
}

pub(crate) fn params<const N: usize>(pairs: [(&str, Value); N]) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

/// All ten benchmarks with canonical parameters.
pub fn all() -> Vec<BenchmarkSpec> {
    let mut out = vec![
        mapreduce(3, 5000, 5),
        trip_booking(true),
        function_chain(10, 1024),
        parallel_sleep(10, 1_000_000),
        storage_io(20, 1 << 20),
        selfish_detour_bench(5000),
    ];
    out.extend(stub_benchmarks());
    out
}

/// The six applications, in the order of their published tables.
pub fn applications() -> Vec<BenchmarkSpec> {
    let mut all = all();
    ["video", "trip_booking", "mapreduce", "excamera", "ml", "genome"]
        .iter()
        .map(|n| {
            let i = all.iter().position(|s| s.name == *n).expect("registered");
            all.swap_remove(i)
        })
        .collect()
}

pub fn by_name(name: &str) -> Option<BenchmarkSpec> {
    all().into_iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests;
