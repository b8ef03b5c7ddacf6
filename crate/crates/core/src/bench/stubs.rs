//! Stub kernels for the data-heavy applications. They model compute time and
//! storage traffic only; no video, ML or genomics work is done.

use std::sync::Arc;

use serde_json::{json, Value};

use super::{document, params, BenchmarkSpec, DocumentedDelta, Structure};
use crate::sim::{Kernel, KernelContext, KernelError, KernelOutput, Kernels};
use crate::transcribe::ExecutionShape;
use crate::Platform;

const MS: u64 = 1_000;

/// Factor applied to the published download and upload volumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubScale(pub f64);

impl Default for StubScale {
    fn default() -> StubScale {
        StubScale(1.0 / 1000.0)
    }
}

impl StubScale {
    fn bytes(self, megabytes: f64) -> u64 {
        (megabytes * 1e6 * self.0).round() as u64
    }
}

/// Downloads `download` bytes, uploads `upload` bytes and computes for
/// `compute_us`; the returned payload is `emit(input)`.
struct Stub {
    compute_us: u64,
    download: u64,
    upload: u64,
    emit: fn(&Value) -> Value,
}

impl Kernel for Stub {
    fn invoke(&self, input: &Value, ctx: &mut KernelContext<'_>) -> Result<KernelOutput, KernelError> {
        let key = format!("{}/{}", ctx.phase, ctx.slot);
        if self.download > 0 {
            let src = format!("{key}/in");
            ctx.objects.seed(&src, self.download, 0);
            ctx.objects.get(&src)?;
        }
        if self.upload > 0 {
            ctx.objects.put(&format!("{key}/out"), self.upload, u64::from(ctx.invocation));
        }
        Ok(KernelOutput::new((self.emit)(input), self.compute_us))
    }
}

/// Stub function: name, compute time and output payload builder.
type StubFunction = (&'static str, u64, fn(&Value) -> Value);

/// Builds the kernels of a stub benchmark. Traffic is spread evenly over
/// the `executions` function executions of the canonical run.
fn stub_kernels(
    functions: &[StubFunction],
    executions: usize,
    download_mb: f64,
    upload_mb: f64,
    scale: StubScale,
) -> Kernels {
    let n = executions as u64;
    let (download, upload) = (scale.bytes(download_mb) / n, scale.bytes(upload_mb) / n);
    let mut k = Kernels::new();
    for &(name, compute_us, emit) in functions {
        k.insert(name, Arc::new(Stub { compute_us, download, upload, emit }));
    }
    k
}

fn range(n: u64) -> Value {
    Value::from((0..n).collect::<Vec<u64>>())
}

fn count(v: &Value) -> u64 {
    v.as_u64().unwrap_or(0)
}

/// Video analysis: decode `frames` frames into batches of `batch`, detect
/// objects per batch in parallel, accumulate.
pub fn video(frames: u64, batch: u64, scale: StubScale) -> BenchmarkSpec {
    let batches = frames.div_ceil(batch.max(1));
    let functions: [StubFunction; 3] = [
        ("decode", 4_000 * MS, |i| json!({"batches": range(count(&i["frames"]).div_ceil(count(&i["batch"]).max(1)))})),
        ("detect", 9_000 * MS, |i| json!({"batch": i.clone(), "detections": 3})),
        (
            "acc",
            500 * MS,
            |i| json!({"detections": i.as_array().map_or(0, |a| a.iter().map(|d| count(&d["detections"])).sum::<u64>())}),
        ),
    ];
    let executions = 2 + batches as usize;
    BenchmarkSpec {
        name: "video".into(),
        definition: document("video"),
        params: params([("F", json!(frames)), ("B", json!(batch)), ("scale", json!(scale.0))]),
        kernels: stub_kernels(&functions, executions, 238.83, 7.48, scale),
        input: json!({"frames": frames, "batch": batch}),
        canonical: ExecutionShape::default().with_fanout("detect", batches as usize),
        expected: Structure::new(executions, batches as usize, 3),
        published: Some(Structure::new(4, 2, 3)),
        reported_transitions: Some((7, 20)),
        census_deltas: Vec::new(),
        memory_mb: 2048,
    }
}

/// ExCamera: `frames` frames in chunks of `chunk`; encode and re-encode
/// chunks in parallel, then rebase them one after another.
pub fn excamera(frames: u64, chunk: u64, scale: StubScale) -> BenchmarkSpec {
    let chunks = frames / chunk.max(1);
    let functions: [StubFunction; 4] = [
        ("split", 1_000 * MS, |i| json!({"chunks": range(count(&i["frames"]) / count(&i["chunk"]).max(1))})),
        ("encode", 3_000 * MS, |i| json!({"chunk": i.clone()})),
        ("reencode", 3_000 * MS, |i| json!({"chunk": i["chunk"].clone()})),
        ("rebase", 1_500 * MS, |i| json!({"chunk": i["item"]["chunk"].clone(), "base": i["index"].clone()})),
    ];
    let n = chunks as usize;
    BenchmarkSpec {
        name: "excamera".into(),
        definition: document("excamera"),
        params: params([("M", json!(frames)), ("N", json!(chunk)), ("scale", json!(scale.0))]),
        kernels: stub_kernels(&functions, 1 + 3 * n, 302.07, 17.49, scale),
        input: json!({"frames": frames, "chunk": chunk}),
        canonical: ExecutionShape::default()
            .with_fanout("encode", n)
            .with_fanout("reencode", n)
            .with_fanout("rebase", n),
        expected: Structure::new(1 + 3 * n, n, 3 + n),
        published: Some(Structure::new(16, 5, 6)),
        reported_transitions: Some((21, 73)),
        census_deltas: Vec::new(),
        memory_mb: 256,
    }
}

/// Machine learning: generate `samples` x `features`, then train
/// `classifiers` models in parallel.
pub fn ml(samples: u64, features: u64, classifiers: u64, scale: StubScale) -> BenchmarkSpec {
    let functions: [StubFunction; 2] = [
        ("gen", 2_000 * MS, |i| json!({"classifiers": i["classifiers"].clone()})),
        ("train", 8_000 * MS, |i| json!({"classifier": i.clone(), "trained": true})),
    ];
    let names: Vec<String> = (0..classifiers).map(|c| format!("classifier-{c}")).collect();
    BenchmarkSpec {
        name: "ml".into(),
        definition: document("ml"),
        params: params([
            ("N", json!(samples)),
            ("M", json!(features)),
            ("K", json!(classifiers)),
            ("scale", json!(scale.0)),
        ]),
        kernels: stub_kernels(&functions, 1 + classifiers as usize, 7.82, 3.91, scale),
        input: json!({"samples": samples, "features": features, "classifiers": names}),
        canonical: ExecutionShape::default().with_fanout("train", classifiers as usize),
        expected: Structure::new(1 + classifiers as usize, classifiers as usize, 2),
        published: Some(Structure::new(3, 2, 2)),
        reported_transitions: Some((6, 18)),
        census_deltas: Vec::new(),
        memory_mb: 1024,
    }
}

/// 1000Genome: `individuals` parsers over `lines` lines, merge and sifting,
/// then overlap and frequency per population, side by side.
pub fn genome(lines: u64, individuals: u64, populations: u64, scale: StubScale) -> BenchmarkSpec {
    let functions: [StubFunction; 5] = [
        ("individuals", 6_000 * MS, |i| json!({"populations": i["common"].clone()})),
        ("individuals_merge", 2_000 * MS, |i| json!({"populations": i[0]["populations"].clone()})),
        ("sifting", 2_000 * MS, |i| i.clone()),
        ("mutation_overlap", 4_000 * MS, |i| json!({"population": i.clone()})),
        ("frequency", 5_000 * MS, |i| json!({"population": i.clone()})),
    ];
    let pops: Vec<String> = (0..populations).map(|p| format!("pop-{p}")).collect();
    let (n, p) = (individuals as usize, populations as usize);
    BenchmarkSpec {
        name: "genome".into(),
        definition: document("genome"),
        params: params([
            ("M", json!(lines)),
            ("N", json!(individuals)),
            ("P", json!(populations)),
            ("scale", json!(scale.0)),
        ]),
        kernels: stub_kernels(&functions, n + 2 + 2 * p, 273.54, 3.47, scale),
        input: json!({"lines": lines, "chunks": range(individuals), "populations": pops}),
        canonical: ExecutionShape::default()
            .with_fanout("individuals", n)
            .with_fanout("mutation_overlap", p)
            .with_fanout("frequency", p),
        expected: Structure::new(n + 2 + 2 * p, n.max(2 * p), 4),
        published: Some(Structure::new(19, 12, 4)),
        reported_transitions: Some((26, 96)),
        census_deltas: vec![DocumentedDelta {
            platform: Platform::Google,
            delta: 8,
            reason: "each of the two population maps adds four iterator bookkeeping steps",
        }],
        memory_mb: 2048,
    }
}

/// The four stub applications with their published parameters.
pub fn stub_benchmarks() -> Vec<BenchmarkSpec> {
    let s = StubScale::default();
    vec![video(10, 5, s), excamera(30, 6, s), ml(500, 1024, 2, s), genome(1250, 5, 6, s)]
}
