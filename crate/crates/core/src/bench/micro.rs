//! Microbenchmarks: function chain, parallel sleep, storage download and
//! the selfish-detour noise probe.

use std::sync::Arc;

use serde_json::{json, Value};

use super::{document, params, BenchmarkSpec, Structure};
use crate::definition::{DataDecl, FunctionSpec, Phase, ResourceAnnotation, WorkflowDefinition};
use crate::sim::{sleep, KernelContext, KernelError, KernelOutput, Kernels};
use crate::transcribe::ExecutionShape;

const MS: u64 = 1_000;

/// `length` sequential functions, each returning `payload_bytes` to its
/// successor.
pub fn function_chain(length: usize, payload_bytes: u64) -> BenchmarkSpec {
    assert!(length > 0, "a chain needs at least one function");
    let mut definition = WorkflowDefinition::new("function_chain", "f0");
    for i in 0..length {
        let mut phase = Phase::task(&format!("f{i}"), "link");
        if i + 1 < length {
            phase = phase.with_next(&format!("f{}", i + 1));
        }
        definition = definition.with_phase(phase);
    }
    let payload = DataDecl { name: "payload".into(), channel: ResourceAnnotation::InvocationPayload };
    definition.functions.push(FunctionSpec {
        name: "link".into(),
        reads: vec![payload.clone()],
        writes: vec![payload],
        ..FunctionSpec::default()
    });
    let link = move |input: &Value, _: &mut KernelContext<'_>| {
        let step = input["step"].as_u64().unwrap_or(0) + 1;
        Ok(KernelOutput::new(json!({"step": step}), MS).with_bytes(payload_bytes))
    };
    BenchmarkSpec {
        name: "function_chain".into(),
        definition,
        params: params([("length", json!(length)), ("M", json!(payload_bytes))]),
        kernels: Kernels::new().with("link", Arc::new(link)),
        input: json!({"step": 0}),
        canonical: ExecutionShape::default(),
        expected: Structure::new(length, 1, length),
        published: None,
        reported_transitions: None,
        census_deltas: Vec::new(),
        memory_mb: 256,
    }
}

/// `n` parallel functions sleeping `sleep_us` each.
pub fn parallel_sleep(n: usize, sleep_us: u64) -> BenchmarkSpec {
    let nap = |input: &Value, _: &mut KernelContext<'_>| {
        let us = input.as_u64().ok_or_else(|| KernelError::Failed("sleep: expected a duration".into()))?;
        Ok(KernelOutput::new(Value::Null, us))
    };
    BenchmarkSpec {
        name: "parallel_sleep".into(),
        definition: document("parallel_sleep"),
        params: params([("N", json!(n)), ("T", json!(sleep_us))]),
        kernels: Kernels::new().with("sleep", Arc::new(nap)),
        input: json!({"tasks": vec![sleep_us; n]}),
        canonical: ExecutionShape::default().with_fanout("sleep", n),
        expected: Structure::new(n, n, 1),
        published: None,
        reported_transitions: None,
        census_deltas: Vec::new(),
        memory_mb: 256,
    }
}

/// `parallel` functions each downloading one object of `bytes` bytes.
pub fn storage_io(parallel: usize, bytes: u64) -> BenchmarkSpec {
    let download = move |_: &Value, ctx: &mut KernelContext<'_>| {
        ctx.objects.seed("storage-io/input", bytes, bytes);
        let meta = ctx.objects.get("storage-io/input")?;
        Ok(KernelOutput::new(json!({"bytes": meta.size}), MS))
    };
    let files: Vec<usize> = (0..parallel).collect();
    BenchmarkSpec {
        name: "storage_io".into(),
        definition: document("storage_io"),
        params: params([("parallel", json!(parallel)), ("D", json!(bytes))]),
        kernels: Kernels::new().with("download", Arc::new(download)),
        input: json!({"files": files}),
        canonical: ExecutionShape::default().with_fanout("download", parallel),
        expected: Structure::new(parallel, parallel, 1),
        published: None,
        reported_transitions: None,
        census_deltas: Vec::new(),
        memory_mb: 256,
    }
}

/// One function running the detour loop until `events` detours are
/// collected. The platform noise itself is estimated by
/// [`crate::metrics::selfish_detour`].
pub fn selfish_detour_bench(events: u64) -> BenchmarkSpec {
    // Nominal loop time per collected detour.
    const PER_EVENT_US: u64 = 200;
    BenchmarkSpec {
        name: "selfish_detour".into(),
        definition: document("selfish_detour"),
        params: params([("N", json!(events))]),
        kernels: Kernels::new().with("detour", sleep(events * PER_EVENT_US)),
        input: json!({"events": events}),
        canonical: ExecutionShape::default(),
        expected: Structure::new(1, 1, 1),
        published: None,
        reported_transitions: None,
        census_deltas: Vec::new(),
        memory_mb: 128,
    }
}
