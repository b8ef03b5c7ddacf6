use std::collections::HashMap;

use serde_json::{json, Value};

use super::*;
use crate::definition::{parse_definition, validate};
use crate::net::{build_net, check_workflow_net, replay};
use crate::sim::{self, PlatformModel, SimError};
use crate::transcribe::{transcribe, transitions};
use crate::Platform;

fn ideal_trace(spec: &BenchmarkSpec) -> ExecutionTrace {
    sim::run(&spec.definition, &spec.input, &PlatformModel::ideal("ideal"), &spec.kernels, 0).unwrap()
}

#[test]
fn documents_parse_and_match_specs() {
    for (name, text) in DOCUMENTS {
        let defn = parse_definition(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(defn.name, name);
    }
    assert_eq!(function_chain(10, 1).definition, document("function_chain"));
    let names: Vec<String> = all().into_iter().map(|s| s.name).collect();
    assert_eq!(names.len(), 10);
    for (stem, _) in DOCUMENTS {
        assert!(names.iter().any(|n| n == stem), "{stem}");
    }
}

#[test]
fn every_benchmark_validates_builds_and_transcribes() {
    for spec in all() {
        let report = validate(&spec.definition);
        assert!(report.is_valid(), "{}: {:?}", spec.name, report.errors);
        let net = build_net(&spec.definition, &spec.canonical.net_fanouts(&spec.definition)).unwrap();
        assert!(check_workflow_net(&net).is_sound_structure(), "{}", spec.name);
        for platform in Platform::ALL {
            let program = transcribe(&spec.definition, platform).unwrap();
            program.self_check().unwrap_or_else(|e| panic!("{} on {platform}: {e}", spec.name));
        }
    }
}

#[test]
fn canonical_runs_have_the_expected_structure() {
    for spec in all() {
        let t = ideal_trace(&spec);
        assert_eq!(Structure::of_trace(&t), spec.expected, "{}", spec.name);
        assert_eq!(t.shape(), spec.canonical, "{}", spec.name);
        let net = build_net(&spec.definition, &t.shape().net_fanouts(&spec.definition)).unwrap();
        assert!(replay(&net, &t.replay_steps(), &t.shape().choices()).unwrap().complete, "{}", spec.name);
    }
}

#[test]
fn canonical_runs_complete_on_every_builtin_model() {
    for spec in all() {
        for model in PlatformModel::builtins() {
            let t = sim::run(&spec.definition, &spec.input, &model, &spec.kernels, 7)
                .unwrap_or_else(|e| panic!("{} on {}: {e}", spec.name, model.name));
            assert_eq!(t.events.len(), spec.expected.function_count, "{} on {}", spec.name, model.name);
        }
    }
}

#[test]
fn published_structure_where_the_model_agrees() {
    for spec in applications() {
        let published = spec.published.unwrap();
        match spec.name.as_str() {
            // The shuffle task is a tenth function; the rebase loop runs one
            // stage per chunk.
            "mapreduce" => assert_eq!(spec.expected, Structure::new(10, 5, 4)),
            "excamera" => assert_eq!(spec.expected, Structure::new(16, 5, 8)),
            _ => assert_eq!(spec.expected, published, "{}", spec.name),
        }
    }
}

#[test]
fn census_against_published_transitions() {
    for spec in applications() {
        let (aws, google) = spec.reported_transitions.unwrap();
        let a = transitions(&spec.definition, Platform::Aws, &spec.canonical).unwrap().total();
        let g = transitions(&spec.definition, Platform::Google, &spec.canonical).unwrap().total();
        assert!(a < g, "{}", spec.name);
        assert_eq!(a, aws, "{}", spec.name);
        assert_eq!(Some(a), spec.expected_transitions(Platform::Aws));
        assert_eq!(Some(g), spec.expected_transitions(Platform::Google), "{}", spec.name);
        if spec.name == "genome" {
            assert_eq!(g, google + 8);
        } else {
            assert_eq!(g, google, "{}", spec.name);
        }
    }
}

fn reducer_totals(output: &Value) -> Vec<(String, u64)> {
    output
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["word"].as_str().unwrap().to_owned(), r["count"].as_u64().unwrap()))
        .collect()
}

#[test]
fn mapreduce_counts_match_a_direct_count() {
    let spec = mapreduce(3, 5000, 5);
    let t = ideal_trace(&spec);
    let totals = reducer_totals(&t.output);
    assert_eq!(totals.len(), 5);
    assert_eq!(totals.iter().map(|r| r.1).sum::<u64>(), 5000);
    let mut oracle: HashMap<&str, u64> = HashMap::new();
    for w in spec.input["text"].as_str().unwrap().split(' ') {
        *oracle.entry(w).or_default() += 1;
    }
    assert_eq!(oracle.len(), 5);
    for (w, c) in &totals {
        assert_eq!(oracle[w.as_str()], *c, "{w}");
    }
}

#[test]
fn mapreduce_without_words_counts_zero() {
    let spec = mapreduce(3, 0, 5);
    let totals = reducer_totals(&ideal_trace(&spec).output);
    assert_eq!(totals.len(), 5);
    assert!(totals.iter().all(|r| r.1 == 0));
}

#[test]
fn corpus_is_seeded() {
    assert_eq!(corpus(1, 100, 4), corpus(1, 100, 4));
    let (text, vocab) = corpus(9, 50, 7);
    assert_eq!(word_count(&text).len(), 7);
    assert_eq!(vocab.len(), 7);
    assert_eq!(word_count(&text).values().sum::<u64>(), 50);
}

#[test]
fn trip_booking_compensates_on_failure() {
    let spec = trip_booking(true);
    let t = ideal_trace(&spec);
    assert_eq!(t.events.len(), 7);
    assert_eq!(t.forward_events().count(), 4);
    assert_eq!(t.compensation_events().count(), 3);
    assert_eq!(t.kv_items, 0);
}

#[test]
fn trip_booking_confirms_without_failure() {
    let spec = trip_booking(false);
    let t = ideal_trace(&spec);
    assert_eq!(t.events.len(), 4);
    assert_eq!(t.kv_items, 3);
}

#[test]
fn empty_trip_request_is_rejected_by_the_first_function() {
    let spec = trip_booking(false);
    let err = sim::run(&spec.definition, &json!({}), &PlatformModel::ideal("i"), &spec.kernels, 0).unwrap_err();
    match err {
        SimError::KernelFailure { function, message, .. } => {
            assert_eq!(function, "reserve_hotel");
            assert!(message.contains("invalid trip request"), "{message}");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn stubs_scale_their_storage_traffic() {
    let t = ideal_trace(&video(10, 5, StubScale::default()));
    let down: u64 = t.store_ops.iter().filter(|o| o.op == sim::OpKind::Get).map(|o| o.bytes).sum();
    // 238.83 MB at 1/1000, spread over four executions.
    assert_eq!(down, 238_830 / 4 * 4);
    let wider = video(20, 5, StubScale::default());
    assert_eq!(Structure::of_trace(&ideal_trace(&wider)), Structure::new(6, 4, 3));
}

#[test]
fn microbenchmark_parameters() {
    assert_eq!(Structure::of_trace(&ideal_trace(&parallel_sleep(7, 1000))), Structure::new(7, 7, 1));
    assert_eq!(Structure::of_trace(&ideal_trace(&function_chain(3, 10))), Structure::new(3, 1, 3));
    let io = ideal_trace(&storage_io(20, 4096));
    assert!(io.store_ops.iter().all(|o| o.bytes == 4096));
    assert_eq!(io.store_ops.len(), 20);
}
