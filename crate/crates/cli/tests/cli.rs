use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowbench::cost::{estimate, PricingTable};
use flowbench::definition::parse_definition;
use flowbench::transcribe::transcribe;
use flowbench::Platform;
use flowbench_cli::{cmd_analyze, cmd_simulate, AnalyzeArgs, RunConfig, SimulateArgs};
use rust_decimal::Decimal;

fn bench(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks").join(format!("{name}.json"))
}

fn flowbench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowbench")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small(defn: &Path, out: &Path, model: &str, burst: usize, reps: usize) -> SimulateArgs {
    SimulateArgs {
        definition: Some(defn.to_owned()),
        model: Some(model.into()),
        burst: Some(burst),
        reps: Some(reps),
        seed: Some(7),
        out: Some(out.to_owned()),
        ..SimulateArgs::default()
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn validate_accepts_every_shipped_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    for spec in flowbench::bench::all() {
        let o = flowbench(&["validate", bench(&spec.name).to_str().unwrap()], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}: {}", spec.name, String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("valid"));
    }
}

#[test]
fn export_net_prints_one_record_per_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flowbench(&["validate", "--export-net", bench("mapreduce").to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let records: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("net ")).collect();
    assert_eq!(records[0], "net mapreduce");
    let kinds = ["place", "data", "transition", "read", "write", "destroy", "arc", "boundary"];
    assert!(records[1..].iter().all(|l| kinds.contains(&l.split(' ').next().unwrap())));
    assert!(records.contains(&"place start") && records.contains(&"place end"));
}

#[test]
fn dangling_next_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, r#"{"name":"bad","root":"a","phases":{"a":{"type":"task","func":"f","next":"nowhere"}}}"#)
        .unwrap();
    let o = flowbench(&["validate", path.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
}

#[test]
fn syntax_error_exits_one_and_missing_file_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(flowbench(&["validate", path.to_str().unwrap()], tmp.path()).status.code(), Some(1));
    assert_eq!(flowbench(&["validate", "does-not-exist.json"], tmp.path()).status.code(), Some(2));
    assert_eq!(flowbench(&["frobnicate"], tmp.path()).status.code(), Some(2));
}

#[test]
fn fanout_warning_alone_still_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flowbench(&["validate", bench("parallel_sleep").to_str().unwrap(), "--fanout", "sleep=100"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("warning:"), "{text}");
    assert!(text.contains("max parallelism 40"), "{text}");
}

#[test]
fn transcribe_reports_census_and_writes_each_platform() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flowbench(&["transcribe", bench("mapreduce").to_str().unwrap(), "--platform", "aws"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("transitions/exec: 14\n"), "{}", stdout(&o));

    let o = flowbench(&["transcribe", bench("mapreduce").to_str().unwrap(), "--out", "all"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    for p in ["aws", "google", "azure"] {
        let dir = tmp.path().join("all").join(p);
        assert!(std::fs::read_dir(&dir).unwrap().count() > 0, "{p} output missing");
    }
    assert!(stdout(&o).contains("transitions/exec: 54 (44 internal, 10 external)"));
}

#[test]
fn transcribe_without_shape_for_unknown_workflow_reports_unknown_count() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.json");
    std::fs::write(&path, r#"{"name":"m","root":"a","phases":{"a":{"type":"map","func":"f","array":"xs"}}}"#).unwrap();
    let o = flowbench(&["transcribe", path.to_str().unwrap(), "--platform", "aws"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("transitions/exec: unknown"));
    let o = flowbench(&["transcribe", path.to_str().unwrap(), "--platform", "aws", "--fanout", "a=3"], tmp.path());
    assert!(stdout(&o).contains("transitions/exec: 6\n"), "{}", stdout(&o));
}

#[test]
fn simulate_writes_one_record_per_execution() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cmd_simulate(&small(&bench("mapreduce"), tmp.path(), "azure-like", 30, 6)).unwrap();
    let text = std::fs::read_to_string(out.dir.join("invocations.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 180);
    assert_eq!(out.manifest.traces, 180);
    assert_eq!(out.manifest.kernels, "benchmark");
    for name in ["run.json", "definition.json", "model.toml", "events.jsonl"] {
        assert!(out.dir.join(name).is_file(), "{name}");
    }
}

#[test]
fn simulate_is_byte_deterministic_and_replaces_old_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = cmd_simulate(&small(&bench("trip_booking"), &tmp.path().join("a"), "gcp-like", 5, 3)).unwrap();
    let first = files(&a.dir);
    let b = cmd_simulate(&small(&bench("trip_booking"), &tmp.path().join("a"), "gcp-like", 5, 3)).unwrap();
    assert_eq!(a.dir, b.dir);
    assert!(first == files(&b.dir), "second run differs from the first");
    let elsewhere = cmd_simulate(&small(&bench("trip_booking"), &tmp.path().join("b"), "gcp-like", 5, 3)).unwrap();
    assert_eq!(elsewhere.dir.file_name(), a.dir.file_name());
    let mut traces = files(&elsewhere.dir);
    traces.remove("run.json");
    let mut first_traces = first.clone();
    first_traces.remove("run.json");
    assert!(traces == first_traces, "trace files depend on the output location");

    std::fs::write(a.dir.join("stale.txt"), "x").unwrap();
    let again = cmd_simulate(&small(&bench("trip_booking"), &tmp.path().join("a"), "gcp-like", 5, 3)).unwrap();
    assert!(!again.dir.join("stale.txt").exists());

    let other =
        cmd_simulate(&SimulateArgs { seed: Some(8), ..small(&bench("trip_booking"), tmp.path(), "gcp-like", 5, 3) })
            .unwrap();
    assert_ne!(other.dir.file_name(), a.dir.file_name());
}

#[test]
fn simulate_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let defn = bench("parallel_sleep");
    let d = defn.to_str().unwrap();
    let o = flowbench(&["simulate", d, "--model", "no-such-model", "--reps", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = flowbench(&["simulate", d, "--burst", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"name":"bad","root":"zz","phases":{"a":{"type":"task","func":"f"}}}"#).unwrap();
    let o = flowbench(&["simulate", bad.to_str().unwrap(), "--reps", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = flowbench(&["simulate", "--reps", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "definition = {:?}\nmodel = \"gcp-like\"\nburst = 4\nreps = 2\nseed = 3\nout = {:?}\n",
            bench("parallel_sleep"),
            tmp.path().join("runs")
        ),
    )
    .unwrap();
    let args = SimulateArgs { config: Some(cfg.clone()), burst: Some(2), ..SimulateArgs::default() };
    let resolved = args.resolve().unwrap();
    let mut expected = RunConfig::new(bench("parallel_sleep"));
    expected.model = "gcp-like".into();
    expected.burst = 2;
    expected.repetitions = 2;
    expected.seed = 3;
    expected.out = tmp.path().join("runs");
    assert_eq!(resolved, expected);
    let out = cmd_simulate(&args).unwrap();
    assert_eq!(out.manifest.traces, 4);

    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    let e = SimulateArgs { config: Some(cfg), ..SimulateArgs::default() }.resolve().unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn unknown_workflow_runs_with_sleep_kernels() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("two.json");
    std::fs::write(
        &path,
        r#"{"name":"two","root":"a","phases":{"a":{"type":"task","func":"f","next":"b"},"b":{"type":"task","func":"g"}}}"#,
    )
    .unwrap();
    let out = cmd_simulate(&small(&path, tmp.path(), "aws-like", 2, 1)).unwrap();
    assert_eq!(out.manifest.kernels, "sleep");
    let traces = flowbench_cli_records(&out.dir);
    let compute: u64 = traces[0].events.iter().map(|e| e.duration_us()).sum();
    assert_eq!(traces[0].events.len(), 2);
    assert!(traces[0].events.iter().all(|e| e.duration_us() == traces[0].events[0].duration_us()));
    let report = cmd_analyze(&AnalyzeArgs { dir: out.dir, pricing: None, out: None }).unwrap();
    assert_eq!(report.runtime.t_c, compute);
}

#[test]
fn analyze_decomposition_and_cost_agree_with_library() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cmd_simulate(&small(&bench("mapreduce"), tmp.path(), "aws-like", 4, 2)).unwrap();
    let report = cmd_analyze(&AnalyzeArgs { dir: out.dir.clone(), pricing: None, out: None }).unwrap();
    assert_eq!(report.traces, 8);
    assert_eq!(report.repetitions, 2);

    let csv = std::fs::read_to_string(out.dir.join("analysis/traces.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    for row in rows {
        let f: Vec<u64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(f[3] + f[4], f[2], "T_C + T_O != total in {row}");
    }
    for name in ["runtime.csv", "decomposition.csv", "scaling.csv", "report.json"] {
        assert!(out.dir.join("analysis").join(name).is_file(), "{name}");
    }

    let defn = parse_definition(&std::fs::read_to_string(bench("mapreduce")).unwrap()).unwrap();
    let traces: Vec<_> = flowbench_cli_records(&out.dir);
    let census =
        transcribe(&defn, Platform::Aws).unwrap().census.transitions_per_execution(&traces[0].shape()).unwrap();
    let memory = Decimal::from(out.manifest.memory_mb) / Decimal::from(1024);
    let expected = estimate(&traces, census, memory, &PricingTable::default(), Platform::Aws).unwrap();
    assert_eq!(report.cost, Some(expected));
}

fn flowbench_cli_records(dir: &Path) -> Vec<flowbench::sim::ExecutionTrace> {
    std::fs::read_to_string(dir.join("invocations.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            serde_json::from_value(v["trace"].clone()).unwrap()
        })
        .collect()
}

#[test]
fn analyze_of_empty_or_missing_dir_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flowbench(&["analyze", "nothing-here"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(tmp.path().join("invocations.jsonl"), "").unwrap();
    let e = cmd_analyze(&AnalyzeArgs { dir: tmp.path().to_owned(), pricing: None, out: None }).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}
