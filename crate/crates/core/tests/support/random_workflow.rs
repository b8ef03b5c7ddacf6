//! Random workflows for property tests: a chain of blocks, each a producer
//! task optionally followed by a map, loop, repeat, switch or parallel
//! phase, with an optional guarded task and failure handler at the end.

#![allow(dead_code)]

use flowbench::definition::{parse_definition, WorkflowDefinition};
use flowbench::sim::{self, KernelContext, KernelError, KernelOutput, Kernels, PlatformModel};
use proptest::prelude::*;
use serde_json::{json, Value};

/// One block of a random workflow: a producer task followed by a phase of
/// some kind.
#[derive(Debug, Clone)]
pub enum Follow {
    None,
    Map,
    Loop,
    Repeat(u32),
    Switch,
    Parallel(Vec<bool>),
}

#[derive(Debug, Clone)]
pub struct Block {
    pub width: usize,
    pub v: u32,
    pub follow: Follow,
    pub compute_us: u64,
}

#[derive(Debug, Clone)]
pub struct RandomWorkflow {
    pub blocks: Vec<Block>,
    /// Final guarded task with a failure handler; `true` makes it fail.
    pub guarded: Option<bool>,
    pub model: usize,
    pub burst: usize,
    pub seed: u64,
}

pub fn block() -> impl Strategy<Value = Block> {
    let follow = prop_oneof![
        Just(Follow::None),
        Just(Follow::Map),
        Just(Follow::Loop),
        (1u32..4).prop_map(Follow::Repeat),
        Just(Follow::Switch),
        prop::collection::vec(any::<bool>(), 2..4).prop_map(Follow::Parallel),
    ];
    (0usize..5, 0u32..10, follow, 1_000u64..400_000).prop_map(|(width, v, follow, compute_us)| Block {
        width,
        v,
        follow,
        compute_us,
    })
}

pub fn random_workflow() -> impl Strategy<Value = RandomWorkflow> {
    (prop::collection::vec(block(), 1..5), prop::option::of(any::<bool>()), 0usize..4, 1usize..3, any::<u64>())
        .prop_map(|(blocks, guarded, model, burst, seed)| RandomWorkflow { blocks, guarded, model, burst, seed })
}

impl RandomWorkflow {
    pub fn build(&self) -> (WorkflowDefinition, Kernels) {
        let mut phases = serde_json::Map::new();
        let mut kernels = Kernels::new();
        let add = |phases: &mut serde_json::Map<String, Value>, name: String, mut body: Value, next: Option<&str>| {
            if let Some(n) = next {
                body["next"] = json!(n);
            }
            phases.insert(name, body);
        };
        let entry = |i: usize| format!("p{i}");
        let tail = if self.guarded.is_some() { Some("guard".to_owned()) } else { None };
        for (i, b) in self.blocks.iter().enumerate() {
            let next = if i + 1 < self.blocks.len() { Some(entry(i + 1)) } else { tail.clone() };
            let payload = json!({"xs": (0..b.width).collect::<Vec<_>>(), "v": b.v});
            let us = b.compute_us;
            let producer = entry(i);
            kernels.insert(
                &producer,
                std::sync::Arc::new(move |_: &Value, _: &mut KernelContext<'_>| {
                    Ok(KernelOutput::new(payload.clone(), us))
                }),
            );
            let worker = |kernels: &mut Kernels, name: &str, us: u64| {
                kernels.insert(name, sim::sleep(us));
            };
            let after = format!("x{i}");
            let follow_next = next.as_deref();
            let producer_next = if matches!(b.follow, Follow::None) { follow_next } else { Some(after.as_str()) };
            add(&mut phases, producer.clone(), json!({"type": "task", "func": producer}), producer_next);
            match &b.follow {
                Follow::None => {}
                Follow::Map | Follow::Loop => {
                    let kind = if matches!(b.follow, Follow::Map) { "map" } else { "loop" };
                    worker(&mut kernels, &after, us / 2 + 1);
                    add(&mut phases, after.clone(), json!({"type": kind, "func": after, "array": "xs"}), follow_next);
                }
                Follow::Repeat(n) => {
                    worker(&mut kernels, &after, us / 3 + 1);
                    add(&mut phases, after.clone(), json!({"type": "repeat", "func": after, "count": n}), follow_next);
                }
                Follow::Switch => {
                    let (lo, hi) = (format!("{after}_lo"), format!("{after}_hi"));
                    add(
                        &mut phases,
                        after.clone(),
                        json!({"type": "switch", "cases": [{"var": "v", "op": "<", "value": 5, "next": lo}], "default": hi}),
                        None,
                    );
                    for (name, t) in [(&lo, us / 4 + 1), (&hi, us / 5 + 1)] {
                        worker(&mut kernels, name, t);
                        add(&mut phases, name.clone(), json!({"type": "task", "func": name}), follow_next);
                    }
                }
                Follow::Parallel(branches) => {
                    let names: Vec<String> = (0..branches.len()).map(|j| format!("{after}_b{j}")).collect();
                    let lists: Vec<Vec<&String>> = names.iter().map(|n| vec![n]).collect();
                    add(&mut phases, after.clone(), json!({"type": "parallel", "branches": lists}), follow_next);
                    for (j, (name, &is_map)) in names.iter().zip(branches).enumerate() {
                        worker(&mut kernels, name, us / (j as u64 + 2) + 1);
                        let body = if is_map {
                            json!({"type": "map", "func": name, "array": "xs"})
                        } else {
                            json!({"type": "task", "func": name})
                        };
                        add(&mut phases, name.clone(), body, None);
                    }
                }
            }
        }
        if let Some(fails) = self.guarded {
            add(&mut phases, "guard".into(), json!({"type": "task", "func": "guard", "catch": "handler"}), None);
            add(&mut phases, "handler".into(), json!({"type": "task", "func": "handler"}), None);
            kernels.insert(
                "guard",
                std::sync::Arc::new(move |input: &Value, _: &mut KernelContext<'_>| {
                    if fails {
                        Err(KernelError::Failed("injected".into()))
                    } else {
                        Ok(KernelOutput::new(input.clone(), 5_000))
                    }
                }),
            );
            kernels.insert("handler", sim::sleep(2_000));
        }
        let doc = json!({"name": "random", "root": "p0", "phases": phases});
        let defn = parse_definition(&doc.to_string()).expect("generated definitions parse");
        (defn, kernels)
    }

    pub fn model(&self) -> PlatformModel {
        match self.model {
            0 => PlatformModel::ideal("ideal"),
            i => PlatformModel::builtins().swap_remove(i - 1),
        }
    }
}
