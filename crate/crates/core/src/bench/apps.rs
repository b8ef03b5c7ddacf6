//! Applications with executable kernels: MapReduce word count and the
//! trip-booking SAGA.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::{document, params, BenchmarkSpec, Structure};
use crate::sim::{ItemKey, KernelContext, KernelError, KernelOutput, Kernels};
use crate::transcribe::ExecutionShape;

const MS: u64 = 1_000;
const CORPUS_SEED: u64 = 0x5eb5_f10e;

fn failed(msg: impl Into<String>) -> KernelError {
    KernelError::Failed(msg.into())
}

/// `words` words drawn from exactly `distinct` pseudo-words; every word of
/// the vocabulary occurs when `words >= distinct`.
pub fn corpus(seed: u64, words: usize, distinct: usize) -> (String, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocabulary: Vec<String> = Vec::with_capacity(distinct);
    while vocabulary.len() < distinct {
        let len = rng.random_range(3..=8);
        let w: String = (0..len).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect();
        if !vocabulary.contains(&w) {
            vocabulary.push(w);
        }
    }
    let mut text: Vec<&str> = vocabulary.iter().take(words).map(String::as_str).collect();
    while text.len() < words {
        text.push(&vocabulary[rng.random_range(0..distinct)]);
    }
    text.shuffle(&mut rng);
    (text.join(" "), vocabulary)
}

/// Occurrences of every word of `text`.
pub fn word_count(text: &str) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for w in text.split_whitespace() {
        *counts.entry(w.to_owned()).or_insert(0) += 1;
    }
    counts
}

fn split(input: &Value, _: &mut KernelContext<'_>) -> Result<KernelOutput, KernelError> {
    let text = input["text"].as_str().ok_or_else(|| failed("split: missing text"))?;
    let mappers =
        input["mappers"].as_u64().filter(|&n| n > 0).ok_or_else(|| failed("split: mappers must be positive"))?;
    let words: Vec<&str> = text.split_whitespace().collect();
    let per = words.len().div_ceil(mappers as usize).max(1);
    let mut batches: Vec<Value> = words.chunks(per).map(|c| Value::from(c.join(" "))).collect();
    batches.resize(mappers as usize, Value::from(""));
    let out = json!({"batches": batches, "vocabulary": input["vocabulary"].clone()});
    Ok(KernelOutput::new(out, 50 * MS + 2 * words.len() as u64))
}

fn count_words(input: &Value, _: &mut KernelContext<'_>) -> Result<KernelOutput, KernelError> {
    let text = input["item"].as_str().ok_or_else(|| failed("map: batch is not text"))?;
    let counts = word_count(text);
    let n: u64 = counts.values().sum();
    let counts: Map<String, Value> = counts.into_iter().map(|(w, c)| (w, Value::from(c))).collect();
    Ok(KernelOutput::new(json!({"counts": counts, "vocabulary": input["common"].clone()}), 20 * MS + 10 * n))
}

fn shuffle(input: &Value, _: &mut KernelContext<'_>) -> Result<KernelOutput, KernelError> {
    let mapped = input.as_array().ok_or_else(|| failed("shuffle: expected mapper results"))?;
    let vocabulary = mapped.first().and_then(|m| m["vocabulary"].as_array()).cloned().unwrap_or_default();
    let groups: Vec<Value> = vocabulary
        .iter()
        .filter_map(Value::as_str)
        .map(|w| {
            let counts: Vec<Value> = mapped.iter().filter_map(|m| m["counts"].get(w).cloned()).collect();
            json!({"word": w, "counts": counts})
        })
        .collect();
    Ok(KernelOutput::new(json!({"groups": groups}), 30 * MS))
}

fn reduce(input: &Value, _: &mut KernelContext<'_>) -> Result<KernelOutput, KernelError> {
    let counts = input["counts"].as_array().ok_or_else(|| failed("reduce: missing counts"))?;
    let total: u64 = counts.iter().filter_map(Value::as_u64).sum();
    Ok(KernelOutput::new(json!({"word": input["word"].clone(), "count": total}), 10 * MS))
}

/// Word count over a seeded corpus of `words` words with `distinct`
/// different words, split over `mappers` parallel mappers.
pub fn mapreduce(mappers: usize, words: usize, distinct: usize) -> BenchmarkSpec {
    let (text, vocabulary) = corpus(CORPUS_SEED, words, distinct);
    let kernels = Kernels::new()
        .with("split", Arc::new(split))
        .with("count_words", Arc::new(count_words))
        .with("shuffle", Arc::new(shuffle))
        .with("reduce", Arc::new(reduce));
    BenchmarkSpec {
        name: "mapreduce".into(),
        definition: document("mapreduce"),
        params: params([("N", json!(mappers)), ("W", json!(words)), ("M", json!(distinct))]),
        kernels,
        input: json!({"text": text, "mappers": mappers, "vocabulary": vocabulary}),
        canonical: ExecutionShape::default().with_fanout("map", mappers).with_fanout("reduce", distinct),
        expected: Structure::new(2 + mappers + distinct, mappers.max(distinct), 4),
        published: Some(Structure::new(9, 5, 4)),
        reported_transitions: Some((14, 54)),
        census_deltas: Vec::new(),
        memory_mb: 256,
    }
}

const ITEMS: [&str; 3] = ["hotel", "flight", "car"];
const TABLE: &str = "trips";

fn trip_key(input: &Value, item: &str) -> Result<ItemKey, KernelError> {
    let id = input["trip_id"].as_str().ok_or_else(|| failed("trip request has no trip_id"))?;
    Ok(ItemKey::sorted(id, item))
}

/// Reservation, confirmation and cancellation functions over the key-value
/// store. Confirmation fails when `fail_at_confirm` is set.
fn trip_kernels(fail_at_confirm: bool) -> Kernels {
    let mut k = Kernels::new();
    for item in ITEMS {
        let reserve = move |input: &Value, ctx: &mut KernelContext<'_>| {
            if item == "hotel" {
                let missing: Vec<&str> = std::iter::once("trip_id")
                    .chain(ITEMS)
                    .filter(|f| input[*f].as_str().is_none_or(str::is_empty))
                    .collect();
                if !missing.is_empty() {
                    return Err(failed(format!("invalid trip request: missing {}", missing.join(", "))));
                }
            }
            let key = trip_key(input, item)?;
            ctx.kv.create(TABLE, key, json!({"offer": input[item].clone(), "state": "reserved"}))?;
            Ok(KernelOutput::new(input.clone(), 30 * MS))
        };
        let cancel = move |input: &Value, ctx: &mut KernelContext<'_>| {
            ctx.kv.delete(TABLE, &trip_key(input, item)?)?;
            Ok(KernelOutput::new(input.clone(), 15 * MS))
        };
        k.insert(&format!("reserve_{item}"), Arc::new(reserve));
        k.insert(&format!("cancel_{item}"), Arc::new(cancel));
    }
    let confirm = move |input: &Value, ctx: &mut KernelContext<'_>| {
        if fail_at_confirm {
            return Err(failed("confirmation rejected"));
        }
        for item in ITEMS {
            let key = trip_key(input, item)?;
            let mut booking = ctx.kv.retrieve(TABLE, &key)?;
            booking["state"] = json!("confirmed");
            ctx.kv.modify(TABLE, &key, booking)?;
        }
        Ok(KernelOutput::new(input.clone(), 20 * MS))
    };
    k.insert("confirm", Arc::new(confirm));
    k
}

/// Trip booking as a SAGA: a failed step runs the cancellations of every
/// earlier reservation in reverse order. Function names are invented.
pub fn trip_booking(fail_at_confirm: bool) -> BenchmarkSpec {
    let mut canonical = ExecutionShape::default();
    let expected = if fail_at_confirm {
        canonical = canonical.with_failure("confirm");
        Structure::new(7, 1, 7)
    } else {
        Structure::new(4, 1, 4)
    };
    BenchmarkSpec {
        name: "trip_booking".into(),
        definition: document("trip_booking"),
        params: params([("fail_at_confirm", json!(fail_at_confirm))]),
        kernels: trip_kernels(fail_at_confirm),
        input: json!({"trip_id": "trip-0001", "hotel": "harbour-inn", "flight": "LH-0421", "car": "compact"}),
        canonical,
        expected,
        published: fail_at_confirm.then_some(Structure::new(7, 1, 7)),
        reported_transitions: fail_at_confirm.then_some((9, 16)),
        census_deltas: Vec::new(),
        memory_mb: 128,
    }
}
