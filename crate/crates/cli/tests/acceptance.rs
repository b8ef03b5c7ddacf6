//! Acceptance checks. Runs every criterion, prints one line each, and exits
//! non-zero if any fails. Run with `cargo test -p flowbench-cli --test acceptance`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use flowbench::bench::{self, Structure};
use flowbench::cost::{estimate, PricingTable, Usd};
use flowbench::definition::{parse_definition, validate, WorkflowDefinition};
use flowbench::metrics::{
    critical_path, median_ci, normalize_critical_path, scaling_profile, selfish_detour, DetourConfig,
};
use flowbench::net::{build_net, replay};
use flowbench::sim::{
    self, ExecutionTrace, FunctionEvent, Interpreter, KernelContext, KernelError, KernelOutput, Kernels, PlatformModel,
    Suspension,
};
use flowbench::transcribe::{transcribe, TransitionCount};
use flowbench::Platform;
use flowbench_cli::{cmd_simulate, SimulateArgs};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Uniform};
use rust_decimal::Decimal;
use serde_json::{json, Value};

#[path = "../../core/tests/support/random_workflow.rs"]
mod random_workflow;
use random_workflow::random_workflow;

/// Outcome of one criterion: pass flag and a one-line detail.
struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Outcome {
        Outcome { pass, detail: detail.into() }
    }
}

fn ideal_trace(spec: &bench::BenchmarkSpec) -> Result<ExecutionTrace, String> {
    sim::run(&spec.definition, &spec.input, &PlatformModel::ideal("ideal"), &spec.kernels, 0)
        .map_err(|e| format!("{}: {e}", spec.name))
}

fn structural_fidelity() -> Outcome {
    let mut problems = Vec::new();
    for spec in bench::all() {
        let report = validate(&spec.definition);
        if !report.is_valid() {
            problems.push(format!("{} invalid", spec.name));
            continue;
        }
        let observed = match ideal_trace(&spec) {
            Ok(t) => Structure::of_trace(&t),
            Err(e) => {
                problems.push(e);
                continue;
            }
        };
        if observed != spec.expected {
            problems.push(format!("{} runs as {observed}, defined as {}", spec.name, spec.expected));
        }
        if let Some(published) = spec.published {
            if observed != published {
                problems.push(format!("{} {observed} vs published {published}", spec.name));
            }
        }
    }
    // Trip Booking's critical path is 4 without the failure and 7 with it.
    if let Ok(t) = ideal_trace(&bench::trip_booking(false)) {
        if Structure::of_trace(&t).critical_path_length != 4 {
            problems.push("trip_booking without failure is not 4 stages long".into());
        }
    }
    if problems.is_empty() {
        Outcome::new(true, "10 benchmarks validate; all published triples match")
    } else {
        Outcome::new(false, problems.join("; "))
    }
}

fn transition_census() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for spec in bench::applications() {
        let Some((aws_reported, google_reported)) = spec.reported_transitions else {
            pass = false;
            lines.push(format!("{}: no reported counts", spec.name));
            continue;
        };
        let mut counts = Vec::new();
        for (platform, reported) in [(Platform::Aws, aws_reported), (Platform::Google, google_reported)] {
            let census = transcribe(&spec.definition, platform)
                .and_then(|p| p.census.compare_reported(&spec.canonical, reported));
            match census {
                Ok(c) => {
                    let documented: i64 =
                        spec.census_deltas.iter().filter(|d| d.platform == platform).map(|d| d.delta).sum();
                    pass &= c.delta() == documented;
                    counts.push(c);
                }
                Err(e) => {
                    pass = false;
                    lines.push(format!("{} {platform}: {e}", spec.name));
                }
            }
        }
        let [aws, google] = counts[..] else { continue };
        pass &= aws.computed < google.computed;
        let mut line = format!("{} {}/{}", spec.name, aws.computed, google.computed);
        if !aws.matches() || !google.matches() {
            let reasons: Vec<String> =
                spec.census_deltas.iter().map(|d| format!("{} {:+} ({})", d.platform, d.delta, d.reason)).collect();
            line.push_str(&format!(
                " [published {aws_reported}/{google_reported}; documented: {}]",
                reasons.join(", ")
            ));
        }
        lines.push(line);
    }
    Outcome::new(pass, lines.join(", "))
}

fn decomposition_identity() -> Outcome {
    const CASES: u32 = 10_000;
    let mut runner = TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() });
    let traces = std::cell::Cell::new(0usize);
    let result = runner.run(&random_workflow(), |w| {
        let (defn, kernels) = w.build();
        let report = validate(&defn);
        prop_assert!(report.is_valid(), "{:?}", report.errors);
        let runs = sim::run_burst(&defn, &[json!({})], &w.model(), &kernels, w.burst, w.seed)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        for t in &runs {
            let d = critical_path(t).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(d.t_c + d.t_o, d.total);
            prop_assert!(d.total <= t.total_runtime_us());
            let shape = t.shape();
            let net = build_net(&defn, &shape.net_fanouts(&defn)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let fired =
                replay(&net, &t.replay_steps(), &shape.choices()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(fired.complete, "replay did not reach the sink");
        }
        traces.set(traces.get() + runs.len());
        Ok(())
    });
    match result {
        Ok(()) if traces.get() >= CASES as usize => {
            Outcome::new(true, format!("{} random traces: T_C + T_O = total and replay completes", traces.get()))
        }
        Ok(()) => Outcome::new(false, format!("only {} traces", traces.get())),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

/// Median T_O/T_C over one burst of `burst` simultaneous executions.
fn overhead_ratio(spec: &bench::BenchmarkSpec, model: &str, burst: usize) -> f64 {
    let model = PlatformModel::builtin(model).expect("builtin");
    let traces = sim::run_burst(&spec.definition, &[spec.input.clone()], &model, &spec.kernels, burst, 1)
        .expect("benchmark runs");
    let mut ratios: Vec<f64> = traces.iter().map(|t| critical_path(t).expect("decomposes").overhead_ratio()).collect();
    ratios.sort_by(f64::total_cmp);
    ratios[ratios.len() / 2]
}

fn platform_trends() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let stubs: BTreeMap<String, bench::BenchmarkSpec> =
        bench::stub_benchmarks().into_iter().map(|s| (s.name.clone(), s)).collect();
    for name in ["excamera", "genome"] {
        let azure = overhead_ratio(&stubs[name], "azure-like", 30);
        let aws = overhead_ratio(&stubs[name], "aws-like", 30);
        pass &= azure > 1.0 && aws < 1.0;
        notes.push(format!("{name} burst-30 median T_O/T_C azure {azure:.2} aws {aws:.3}"));
    }

    let one: WorkflowDefinition =
        parse_definition(r#"{"name":"one","root":"a","phases":{"a":{"type":"task","func":"f"}}}"#).expect("parses");
    let kernels = Kernels::new().with("f", sim::sleep(1_000_000));
    let peak = |model: &str| {
        let m = PlatformModel::builtin(model).expect("builtin");
        scaling_profile(&sim::run_burst(&one, &[json!({})], &m, &kernels, 30, 1).expect("burst runs")).max()
    };
    let (azure_peak, aws_peak) = (peak("azure-like"), peak("aws-like"));
    pass &= azure_peak == 10 && aws_peak >= 30;
    notes.push(format!("burst-30 peak azure {azure_peak} aws {aws_peak}"));

    let widths = [1usize, 2, 4, 8, 16, 32];
    let series = |model: &str| -> Vec<f64> {
        widths.iter().map(|&n| overhead_ratio(&bench::parallel_sleep(n, 1_000_000), model, 1)).collect()
    };
    let (azure, aws) = (series("azure-like"), series("aws-like"));
    let increasing = azure.windows(2).all(|w| w[1] > w[0]);
    let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    // Near-flat: the aws-like ratio moves by under 0.1 over the whole
    // range, less than a tenth of the azure-like growth.
    let flat = spread(&aws) < 0.1 && spread(&aws) * 10.0 < spread(&azure);
    pass &= increasing && flat;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ");
    notes.push(format!("parallel_sleep T_O/T_C azure [{}] aws [{}]", fmt(&azure), fmt(&aws)));
    Outcome::new(pass, notes.join("; "))
}

fn uniform_trace(interpreter: Interpreter, durations_us: &[u64]) -> ExecutionTrace {
    let events = durations_us
        .iter()
        .enumerate()
        .map(|(i, &d)| FunctionEvent {
            invocation: 0,
            id: i as u32,
            function: format!("f{i}"),
            phase: format!("p{i}"),
            stage: i.to_string(),
            slot: 0,
            step: 0,
            dispatch_us: 0,
            start_us: 0,
            end_us: d,
            container: format!("c{i}"),
            cold: false,
            payload_in_bytes: 0,
            payload_out_bytes: 0,
            failed: false,
            compensation: false,
        })
        .collect();
    ExecutionTrace {
        invocation: 0,
        workflow: "w".into(),
        model: "m".into(),
        interpreter,
        seed: 0,
        submitted_us: 0,
        completed_us: durations_us.iter().sum(),
        events,
        coordinators: Vec::new(),
        charged_transitions: 0,
        fanouts: BTreeMap::new(),
        routes: BTreeMap::new(),
        failed: Default::default(),
        store_ops: Vec::new(),
        kv_items: 0,
        output: Value::Null,
    }
}

fn cost_arithmetic() -> Outcome {
    let pricing = PricingTable::default();
    // Nine invocations summing to 10 s at 1 GB: 10 GB-s per execution.
    let durations = [2_000_000, 1_000_000, 1_000_000, 1_000_000, 1_000_000, 1_000_000, 1_000_000, 1_000_000, 1_000_000];
    let traces = vec![uniform_trace(Interpreter::Aws, &durations); 1000];
    let census = TransitionCount { internal: 14, external: 0 };
    let c = match estimate(&traces, census, Decimal::ONE, &pricing, Platform::Aws) {
        Ok(c) => c,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let ratio = pricing.rates(Platform::Aws).compute_per_gb_s / pricing.rates(Platform::Google).compute_per_gb_s;
    let two_sig = ratio.round_sf(2).unwrap_or(ratio);
    let pass = c.total == Usd::from_decimal(Decimal::new(5188, 4))
        && ratio == Decimal::new(668, 2)
        && two_sig == Decimal::new(67, 1);
    Outcome::new(
        pass,
        format!(
            "worked example ${} (compute {}, invocation {}, transitions {}); compute rate ratio {ratio} ~ {two_sig}x",
            c.total, c.compute, c.invocation, c.orchestration
        ),
    )
}

fn median_coverage() -> Outcome {
    const N: usize = 30;
    const REPS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_6469);
    let uniform = Uniform::new(0.0, 1.0).expect("valid range");
    let lognormal = LogNormal::new(0.0, 1.0).expect("valid parameters");
    let (low, high) = (Normal::new(-2.0, 1.0).expect("valid"), Normal::new(2.0, 1.0).expect("valid"));
    let mut draw: Vec<(&str, f64, Box<dyn FnMut(&mut ChaCha8Rng) -> f64>)> = vec![
        ("uniform", 0.5, Box::new(move |r| uniform.sample(r))),
        ("lognormal", 1.0, Box::new(move |r| lognormal.sample(r))),
        ("bimodal", 0.0, Box::new(move |r| if r.random::<bool>() { low.sample(r) } else { high.sample(r) })),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, median, sample) in &mut draw {
        let mut hits = 0usize;
        let mut claimed = 0.0;
        for _ in 0..REPS {
            let xs: Vec<f64> = (0..N).map(|_| sample(&mut rng)).collect();
            let ci = median_ci(&xs, 0.95).expect("n = 30 suffices");
            claimed = ci.coverage;
            if ci.low <= *median && *median <= ci.high {
                hits += 1;
            }
        }
        let observed = hits as f64 / REPS as f64;
        pass &= observed >= claimed - 0.01;
        notes.push(format!("{name} {:.2}% (claimed {:.2}%)", observed * 100.0, claimed * 100.0));
    }
    Outcome::new(pass, notes.join(", "))
}

fn saga() -> Outcome {
    let failing = ideal_trace(&bench::trip_booking(true));
    let succeeding = ideal_trace(&bench::trip_booking(false));
    match (failing, succeeding) {
        (Ok(f), Ok(s)) => {
            let compensations = f.compensation_events().count();
            let pass = f.kv_items == 0 && compensations == 3 && s.kv_items == 3 && s.compensation_events().count() == 0;
            Outcome::new(
                pass,
                format!(
                    "failing confirm: {compensations} compensations, {} items left; no failure: {} reservations",
                    f.kv_items, s.kv_items
                ),
            )
        }
        (f, s) => Outcome::new(false, format!("{:?} {:?}", f.err(), s.err())),
    }
}

/// Exact `t_c * (1 - s)` with `s` read as its shortest decimal form,
/// rounded half to even.
fn normalize_oracle(t_c: u64, s_m: f64) -> u64 {
    let text = format!("{s_m}");
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let digits: BigInt = format!("{int}{frac}").parse().expect("decimal digits");
    let share = BigRational::new(digits, BigInt::from(10u32).pow(frac.len() as u32));
    let exact = BigRational::from_integer(BigInt::from(t_c)) * (BigRational::one() - share);
    let floor = exact.floor();
    let rest = &exact - &floor;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let up = rest > half || (rest == half && (floor.to_integer() % 2u32).is_positive());
    let value = if up { floor + BigRational::one() } else { floor };
    assert!(!value.is_negative() && (value.fract()).is_zero());
    value.to_integer().to_u64().expect("fits")
}

fn noise_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e6f_6973);
    let mut mismatches = 0;
    let mut first = None;
    for i in 0..1000 {
        let t_c: u64 = rng.random_range(0..=10_000_000_000);
        // Alternate short decimals (where ties are common) and arbitrary doubles.
        let s_m: f64 =
            if i % 2 == 0 { rng.random_range(0..1000u32) as f64 / 1000.0 } else { rng.random_range(0.0..0.999_999) };
        let got = normalize_critical_path(t_c, s_m).ok();
        let want = normalize_oracle(t_c, s_m);
        if got != Some(want) {
            mismatches += 1;
            first.get_or_insert(format!("({t_c}, {s_m}) gave {got:?}, oracle {want}"));
        }
    }
    let mut pass = mismatches == 0;
    let mut notes =
        vec![format!("normalize: {mismatches}/1000 mismatches{}", first.map(|f| format!(" {f}")).unwrap_or_default())];
    for share in [0.1, 0.2, 0.3] {
        let mut model = PlatformModel::ideal("noisy");
        model.suspension = vec![Suspension { memory_mb: model.memory_mb, share }];
        let est = selfish_detour(&DetourConfig::default(), &model, 42);
        pass &= (est.share - share).abs() <= 0.02;
        notes.push(format!("S_M {share} -> {:.4}", est.share));
    }
    Outcome::new(pass, notes.join("; "))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable") {
            let p = entry.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).expect("inside").to_owned(), std::fs::read(&p).expect("readable"));
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let args = SimulateArgs {
        definition: Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks/trip_booking.json")),
        model: Some("azure-like".into()),
        seed: Some(2024),
        out: Some(tmp.path().to_owned()),
        ..SimulateArgs::default()
    };
    let first = match cmd_simulate(&args) {
        Ok(o) => (o.dir.clone(), snapshot(&o.dir), o.manifest.traces),
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let second = match cmd_simulate(&args) {
        Ok(o) => (o.dir.clone(), snapshot(&o.dir)),
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let same = first.0 == second.0 && first.1 == second.1;
    let bytes: usize = first.1.values().map(Vec::len).sum();
    Outcome::new(same, format!("{} traces, {} files, {bytes} bytes; identical: {same}", first.2, first.1.len()))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("structural fidelity", Duration::from_secs(1), structural_fidelity),
        ("transition census", Duration::from_secs(1), transition_census),
        ("decomposition identity", Duration::from_secs(60), decomposition_identity),
        ("platform trends", Duration::from_secs(30), platform_trends),
        ("cost arithmetic", Duration::from_secs(1), cost_arithmetic),
        ("median CI coverage", Duration::from_secs(60), median_coverage),
        ("SAGA correctness", Duration::from_secs(1), saga),
        ("noise normalization", Duration::from_secs(10), noise_normalization),
        ("determinism", Duration::from_secs(30), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = outcome.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {}: {} {name}: {} [{:.2}s of {}s{}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
