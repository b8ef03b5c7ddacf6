use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::*;
use crate::definition::parse_definition;
use crate::sim::{self, sleep, KernelContext, KernelOutput, Kernels, Latency, PlatformModel, Simulator, Suspension};

const MS: u64 = 1_000;

fn event(phase: &str, stage: &str, slot: u32, start: u64, end: u64) -> FunctionEvent {
    FunctionEvent {
        invocation: 0,
        id: slot,
        function: phase.to_owned(),
        phase: phase.to_owned(),
        stage: stage.to_owned(),
        slot,
        step: 0,
        dispatch_us: start,
        start_us: start,
        end_us: end,
        container: format!("{phase}#{slot}"),
        cold: false,
        payload_in_bytes: 0,
        payload_out_bytes: 0,
        failed: false,
        compensation: false,
    }
}

fn trace(events: Vec<FunctionEvent>) -> ExecutionTrace {
    ExecutionTrace {
        invocation: 0,
        workflow: "w".into(),
        model: "m".into(),
        interpreter: sim::Interpreter::Generic,
        seed: 0,
        submitted_us: 0,
        completed_us: events.iter().map(|e| e.end_us).max().unwrap_or(0),
        events,
        coordinators: Vec::new(),
        charged_transitions: 0,
        fanouts: Default::default(),
        routes: Default::default(),
        failed: Default::default(),
        store_ops: Vec::new(),
        kv_items: 0,
        output: Value::Null,
    }
}

#[test]
fn map_then_task_decomposes() {
    let t = trace(vec![event("m", "0", 0, 0, 3), event("m", "0", 1, 0, 7), event("t", "1", 0, 10, 12)]);
    assert_eq!(critical_path(&t).unwrap(), Decomposition { t_c: 9, t_o: 3, total: 12 });
    let phases = phase_runtimes(&t);
    assert_eq!(phases[0], PhaseRuntime { phase: "m".into(), start_us: 0, end_us: 7 });
    assert_eq!(phases[1].duration_us(), 2);
}

#[test]
fn single_function_has_no_overhead() {
    let t = trace(vec![event("t", "0", 0, 5, 17)]);
    assert_eq!(critical_path(&t).unwrap(), Decomposition { t_c: 12, t_o: 0, total: 12 });
    assert_eq!(critical_path(&trace(Vec::new())), Err(MetricsError::EmptyTrace));
}

#[test]
fn parallel_branches_take_the_longest_branch() {
    // Branch 0: two stages of 4 and 5; branch 1: one stage of 7; then a task.
    let t = trace(vec![
        event("a", "0/0/0", 0, 0, 4),
        event("b", "0/0/1", 0, 4, 9),
        event("c", "0/1/0", 0, 0, 7),
        event("d", "1", 0, 10, 11),
    ]);
    let d = critical_path(&t).unwrap();
    assert_eq!((d.t_c, d.total), (10, 11));
}

#[test]
fn normalization() {
    assert_eq!(normalize_critical_path(1000, 0.0), Ok(1000));
    assert_eq!(normalize_critical_path(1000, 0.2), Ok(800));
    assert_eq!(normalize_critical_path(999, 0.5), Ok(500));
    assert_eq!(normalize_critical_path(997, 0.5), Ok(498));
    assert_eq!(normalize_critical_path(5, 0.3), Ok(4));
    assert!(matches!(normalize_critical_path(1, 1.0), Err(MetricsError::DomainError(_))));
    assert!(matches!(normalize_critical_path(1, -0.1), Err(MetricsError::DomainError(_))));
}

#[test]
fn median_interval_of_six() {
    let ci = median_ci(&[6.0, 1.0, 5.0, 2.0, 4.0, 3.0], 0.95).unwrap();
    assert_eq!(ci.ranks, (1, 6));
    assert_eq!((ci.low, ci.high), (1.0, 6.0));
    assert_eq!(ci.coverage, 0.96875);
    let c = median_ci(&[4.2; 9], 0.95).unwrap();
    assert_eq!((c.low, c.high), (4.2, 4.2));
    assert_eq!(median_ci(&[1.0; 5], 0.95), Err(MetricsError::TooFewSamples { needed: 6, got: 5 }));
}

#[test]
fn median_interval_ranks_for_thirty() {
    // P(B <= 9) for B ~ Bin(30, 1/2) is 0.0214, so k = 10 gives 0.957.
    let samples: Vec<f64> = (1..=30).map(f64::from).collect();
    let ci = median_ci(&samples, 0.95).unwrap();
    assert_eq!(ci.ranks, (10, 21));
    assert!((ci.coverage - 0.957_226_1).abs() < 1e-6, "{}", ci.coverage);
}

#[test]
fn median_interval_covers_in_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let reps = 10_000;
    let mut hits = 0;
    for _ in 0..reps {
        let s: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let ci = median_ci(&s, 0.95).unwrap();
        if ci.low <= 0.5 && 0.5 <= ci.high {
            hits += 1;
        }
    }
    assert!(hits as f64 / reps as f64 >= 0.95, "{hits}");
}

fn one_task() -> crate::definition::WorkflowDefinition {
    parse_definition(r#"{"name":"one","root":"a","phases":{"a":{"type":"task","func":"f"}}}"#).unwrap()
}

#[test]
fn scaling_of_bursts() {
    let kernels = Kernels::new().with("f", sleep(10 * MS));
    let mut m = PlatformModel::ideal("x");
    m.container_cap = Some(10);
    let traces = sim::run_burst(&one_task(), &[json!({})], &m, &kernels, 30, 0).unwrap();
    let p = scaling_profile(&traces);
    assert_eq!(p.max(), 10);
    let busy: u64 = traces.iter().flat_map(|t| &t.events).map(|e| e.duration_us()).sum();
    assert_eq!(p.area(), busy as u128);
    let single = sim::run(&one_task(), &json!({}), &m, &kernels, 0).unwrap();
    assert_eq!(scaling_profile(&[single]).max(), 1);
}

#[test]
fn scaling_follows_map_widths() {
    let defn = parse_definition(
        r#"{"name":"two","root":"a","phases":{
            "a":{"type":"map","func":"fan","array":"a","common_parameters":"b","next":"b"},
            "b":{"type":"map","func":"f","array":"0"}}}"#,
    )
    .unwrap();
    let fan = |input: &Value, _: &mut KernelContext<'_>| Ok(KernelOutput::new(input["common"].clone(), 10 * MS));
    let kernels = Kernels::new().with("fan", Arc::new(fan)).with("f", sleep(10 * MS));
    let mut m = PlatformModel::ideal("x");
    m.per_transition_overhead_us = MS;
    let t = sim::run(&defn, &json!({"a": [1, 2], "b": [1, 2, 3, 4, 5]}), &m, &kernels, 0).unwrap();
    assert_eq!(scaling_profile(&[t]).local_maxima(), vec![2, 5]);
}

#[test]
fn cold_fractions() {
    let kernels = Kernels::new().with("f", sleep(10 * MS));
    let mut simulator = Simulator::new(PlatformModel::builtin("aws-like").unwrap(), 1).unwrap();
    let first = simulator.run_burst(&one_task(), &[json!({})], &kernels, 1).unwrap();
    assert_eq!(cold_start_stats(&first)["aws-like"].fraction(), 1.0);
    let second = simulator.run_burst(&one_task(), &[json!({})], &kernels, 1).unwrap();
    assert_eq!(cold_start_stats(&second)["aws-like"].fraction(), 0.0);
}

fn model_with_share(share: f64) -> PlatformModel {
    let mut m = PlatformModel::ideal("noisy");
    if share > 0.0 {
        m.suspension = vec![Suspension { memory_mb: 128, share }];
    }
    m
}

#[test]
fn selfish_detour_recovers_injected_share() {
    let cfg = DetourConfig::default();
    let zero = selfish_detour(&cfg, &model_with_share(0.0), 1);
    assert_eq!(zero.share, 0.0);
    assert_eq!(zero.detours, 0);
    let est = selfish_detour(&cfg, &model_with_share(0.2), 1);
    assert_eq!(est.detours, 5_000);
    assert!((0.18..=0.22).contains(&est.share), "{}", est.share);
    let low = selfish_detour(&cfg, &model_with_share(0.1), 2).share;
    let high = selfish_detour(&cfg, &model_with_share(0.3), 2).share;
    assert!(low < high);
}

#[test]
fn report_and_csv() {
    let kernels = Kernels::new().with("f", sleep(10 * MS));
    let mut m = PlatformModel::ideal("ideal");
    m.cold_start = Latency::Uniform { min_us: 0, max_us: 5 * MS };
    let traces = sim::run_burst(&one_task(), &[json!({})], &m, &kernels, 8, 3).unwrap();
    let r = BenchmarkReport::from_traces("one", &traces).unwrap();
    assert_eq!(r.runs, 8);
    assert_eq!(r.t_c, 10 * MS);
    assert_eq!(r.cold_fraction, 1.0);
    assert!(r.median_ci.is_some());
    assert!(r.total.p5 <= r.total.p50 && r.total.p50 <= r.total.p95);
    let csv = runtime_csv(std::slice::from_ref(&r));
    assert!(csv.starts_with("benchmark,model,runs,p5_ms"));
    assert_eq!(csv.lines().count(), 2);
    assert!(decomposition_csv(&[r]).contains("one,ideal,10.000,0.000,1.0000"));
    let s = scaling_csv(&[("one".into(), scaling_profile(&traces))]);
    assert!(s.lines().nth(1).unwrap().starts_with("one,"));
}

#[test]
fn percentiles_use_nearest_rank() {
    let s = [5, 1, 4, 2, 3];
    assert_eq!(percentile(&s, 50.0), Some(3));
    assert_eq!(percentile(&s, 5.0), Some(1));
    assert_eq!(percentile(&s, 100.0), Some(5));
    assert_eq!(percentile(&[], 50.0), None);
}
