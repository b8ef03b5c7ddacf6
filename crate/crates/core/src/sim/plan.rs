//! Planning pass: runs the kernels in dependency order and records what ran,
//! with which durations and payloads, as a DAG of jobs and orchestrator
//! nodes. Timing is left to the engine.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::kernel::{KernelContext, KernelError, Kernels};
use super::model::{Interpreter, PlatformModel, PoolScope};
use super::store::{KeyValueStore, ObjectStore, StoreError, StoreOp};
use super::SimError;
use crate::definition::{Phase, PhaseKind, WorkflowDefinition};

pub(crate) const SHARED_POOL: &str = "app";

#[derive(Debug, Clone)]
pub(crate) struct Job {
    pub function: String,
    pub phase: String,
    pub stage: String,
    pub slot: u32,
    pub step: u32,
    pub pool: String,
    /// Orchestrator time before dispatch and after the result returns.
    pub pre_us: u64,
    pub post_us: u64,
    pub stagger_us: u64,
    pub run_us: u64,
    /// Extra storage round trip for an oversized return payload.
    pub return_us: u64,
    pub payload_in: u64,
    pub payload_out: u64,
    pub failed: bool,
    pub compensation: bool,
    pub group: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) enum NodeKind {
    Control { label: String, phase: Option<String>, duration_us: u64 },
    Job(Box<Job>),
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub kind: NodeKind,
    pub deps: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub invocation: u32,
    pub nodes: Vec<Node>,
    /// Concurrency limit of each map instance.
    pub groups: Vec<Option<u32>>,
    pub charged_transitions: u64,
    pub fanouts: BTreeMap<String, usize>,
    pub routes: BTreeMap<String, String>,
    pub failed: BTreeSet<String>,
    pub store_ops: Vec<StoreOp>,
    pub kv_items: usize,
    pub output: Value,
}

struct Cursor {
    prefix: String,
    next: u32,
}

impl Cursor {
    fn new(prefix: String) -> Cursor {
        Cursor { prefix, next: 0 }
    }

    fn stage(&mut self) -> String {
        let s = format!("{}{}", self.prefix, self.next);
        self.next += 1;
        s
    }
}

struct Flow {
    payload: Value,
    exits: Vec<usize>,
}

struct Call<'s> {
    phase: &'s str,
    function: &'s str,
    stage: &'s str,
    slot: u32,
    step: u32,
    pre: u64,
    post: u64,
    stagger_us: u64,
    group: Option<usize>,
    compensation: bool,
}

pub(crate) struct Planner<'a> {
    defn: &'a WorkflowDefinition,
    kernels: &'a Kernels,
    model: &'a PlatformModel,
    invocation: u32,
    nodes: Vec<Node>,
    groups: Vec<Option<u32>>,
    charged: u64,
    history: u64,
    fanouts: BTreeMap<String, usize>,
    routes: BTreeMap<String, String>,
    failed: BTreeSet<String>,
    kv: KeyValueStore,
    objects: ObjectStore,
}

fn size_of(v: &Value) -> u64 {
    serde_json::to_vec(v).map_or(0, |b| b.len() as u64)
}

impl<'a> Planner<'a> {
    pub(crate) fn new(
        defn: &'a WorkflowDefinition,
        kernels: &'a Kernels,
        model: &'a PlatformModel,
        invocation: u32,
    ) -> Planner<'a> {
        Planner {
            defn,
            kernels,
            model,
            invocation,
            nodes: Vec::new(),
            groups: Vec::new(),
            charged: 0,
            history: 0,
            fanouts: BTreeMap::new(),
            routes: BTreeMap::new(),
            failed: BTreeSet::new(),
            kv: KeyValueStore::new(),
            objects: ObjectStore::new(),
        }
    }

    pub(crate) fn plan(mut self, input: Value) -> Result<Plan, SimError> {
        let shape = self.model.interpreter;
        let mut deps = Vec::new();
        match shape {
            Interpreter::Aws | Interpreter::Google => deps = vec![self.control("start", None, 1, deps)],
            Interpreter::Azure => deps = vec![self.awaken(deps)],
            Interpreter::Generic => {}
        }
        let mut cursor = Cursor::new(String::new());
        let root = self.defn.root.clone();
        let flow = self.sequence(&root, input, deps, &mut cursor, false)?;
        match shape {
            Interpreter::Aws => {
                self.control("end", None, 1, flow.exits);
            }
            Interpreter::Google => {
                self.control("done", None, 1, flow.exits);
            }
            _ => {}
        }
        let mut store_ops = self.kv.log().to_vec();
        store_ops.extend_from_slice(self.objects.log());
        Ok(Plan {
            invocation: self.invocation,
            nodes: self.nodes,
            groups: self.groups,
            charged_transitions: self.charged,
            fanouts: self.fanouts,
            routes: self.routes,
            failed: self.failed,
            store_ops,
            kv_items: self.kv.len(),
            output: flow.payload,
        })
    }

    fn push(&mut self, kind: NodeKind, deps: Vec<usize>) -> usize {
        self.nodes.push(Node { kind, deps });
        self.nodes.len() - 1
    }

    /// Orchestrator node worth `units` transitions.
    fn control(&mut self, label: &str, phase: Option<&str>, units: u64, deps: Vec<usize>) -> usize {
        self.charged += units;
        let kind = NodeKind::Control {
            label: label.to_owned(),
            phase: phase.map(str::to_owned),
            duration_us: units * self.model.per_transition_overhead_us,
        };
        self.push(kind, deps)
    }

    /// Azure orchestrator replay: base cost plus the history replayed so far.
    fn awaken(&mut self, deps: Vec<usize>) -> usize {
        let duration_us = self.model.per_transition_overhead_us + self.history * self.model.replay_per_event_us;
        let kind = NodeKind::Control { label: "replay".into(), phase: None, duration_us };
        self.push(kind, deps)
    }

    fn awaken_after(&mut self, exits: Vec<usize>, activities: u64) -> Vec<usize> {
        self.history += activities;
        vec![self.awaken(exits)]
    }

    fn phase(&self, name: &str) -> Result<&'a Phase, SimError> {
        self.defn.phase(name).ok_or_else(|| SimError::UnknownPhase(name.to_owned()))
    }

    fn sequence(
        &mut self,
        from: &str,
        mut payload: Value,
        mut deps: Vec<usize>,
        cursor: &mut Cursor,
        mut compensation: bool,
    ) -> Result<Flow, SimError> {
        let shape = self.model.interpreter;
        let mut current = Some(from.to_owned());
        while let Some(name) = current.take() {
            let phase = self.phase(&name)?;
            if shape == Interpreter::Generic {
                deps = vec![self.control("coordinator", Some(&name), 1, deps)];
            }
            match &phase.kind {
                PhaseKind::Task { func } => {
                    let (pre, post) = match shape {
                        Interpreter::Aws => (1, 0),
                        Interpreter::Google => (1, 1),
                        _ => (0, 0),
                    };
                    let stage = cursor.stage();
                    let call = Call {
                        phase: &name,
                        function: func,
                        stage: &stage,
                        slot: 0,
                        step: 0,
                        pre,
                        post,
                        stagger_us: 0,
                        group: None,
                        compensation,
                    };
                    let (id, result) = self.job(call, &payload, deps)?;
                    deps = vec![id];
                    if shape == Interpreter::Azure {
                        deps = self.awaken_after(deps, 1);
                    }
                    match result {
                        Ok(out) => payload = out,
                        Err(e) => match &phase.catch {
                            Some(handler) => {
                                self.failed.insert(name.clone());
                                payload = handler_input(payload, &e);
                                compensation = true;
                                current = Some(handler.clone());
                                continue;
                            }
                            None => return Err(self.uncaught(&name, func, e, compensation)),
                        },
                    }
                }
                PhaseKind::Map { body, array, common_parameters } => {
                    let items = match array.resolve(&payload) {
                        Some(Value::Array(items)) => items,
                        _ => {
                            return Err(SimError::Payload {
                                phase: name.clone(),
                                reason: format!("`{array}` is not an array"),
                            })
                        }
                    };
                    let common = common_parameters.as_ref().map(|p| p.resolve(&payload).unwrap_or(Value::Null));
                    self.fanouts.insert(name.clone(), items.len());
                    deps = match shape {
                        Interpreter::Aws => vec![self.control("map", Some(&name), 1, deps)],
                        Interpreter::Google => {
                            let init = self.control("map-init", Some(&name), 2, deps);
                            vec![self.control("map-run", Some(&name), 1, vec![init])]
                        }
                        _ => deps,
                    };
                    self.groups.push(self.model.max_parallelism);
                    let group = Some(self.groups.len() - 1);
                    let stage = cursor.stage();
                    let chain = body.len() as u64;
                    let mut outputs = Vec::with_capacity(items.len());
                    let mut exits = Vec::new();
                    for (i, item) in items.into_iter().enumerate() {
                        let mut value = match &common {
                            Some(c) => json!({"item": item, "common": c}),
                            None => item,
                        };
                        let mut element_deps = deps.clone();
                        for (j, func) in body.iter().enumerate() {
                            let (pre, post) = match shape {
                                Interpreter::Aws => (1, 0),
                                Interpreter::Google => {
                                    (1 + u64::from(j == 0), 1 + 2 * u64::from(j as u64 + 1 == chain))
                                }
                                _ => (0, 0),
                            };
                            let stagger_us = if shape == Interpreter::Azure && j == 0 {
                                i as u64 * self.model.fanout_dispatch_us
                            } else {
                                0
                            };
                            let call = Call {
                                phase: &name,
                                function: func,
                                stage: &stage,
                                slot: i as u32,
                                step: j as u32,
                                pre,
                                post,
                                stagger_us,
                                group,
                                compensation,
                            };
                            let (id, result) = self.job(call, &value, element_deps)?;
                            element_deps = vec![id];
                            value = result.map_err(|e| self.uncaught(&name, func, e, compensation))?;
                        }
                        outputs.push(value);
                        exits.extend(element_deps);
                    }
                    let activities = exits.len() as u64 * chain;
                    if !exits.is_empty() {
                        deps = exits;
                    }
                    deps = match shape {
                        Interpreter::Google => vec![self.control("map-collect", Some(&name), 1, deps)],
                        Interpreter::Azure if activities > 0 => self.awaken_after(deps, activities),
                        _ => deps,
                    };
                    payload = Value::Array(outputs);
                }
                PhaseKind::Loop { func, array } => {
                    let items = match array.resolve(&payload) {
                        Some(Value::Array(items)) => items,
                        _ => {
                            return Err(SimError::Payload {
                                phase: name.clone(),
                                reason: format!("`{array}` is not an array"),
                            })
                        }
                    };
                    self.fanouts.insert(name.clone(), items.len());
                    deps = match shape {
                        Interpreter::Aws => vec![self.control("loop", Some(&name), 1, deps)],
                        Interpreter::Google => vec![self.control("for", Some(&name), 1, deps)],
                        _ => deps,
                    };
                    let mut previous = Value::Null;
                    let iterations = items.len();
                    for (i, item) in items.into_iter().enumerate() {
                        let input = json!({"item": item, "index": i, "previous": previous});
                        let stage = cursor.stage();
                        let (id, out) = self.iteration(&name, func, &stage, i as u32, &input, deps, compensation)?;
                        deps = id;
                        previous = out;
                    }
                    if iterations > 0 {
                        payload = previous;
                    }
                }
                PhaseKind::Repeat { func, count } => {
                    for i in 0..*count {
                        let stage = cursor.stage();
                        let (id, out) = self.iteration(&name, func, &stage, i, &payload, deps, compensation)?;
                        deps = id;
                        payload = out;
                    }
                }
                PhaseKind::Switch { cases, defaults } => {
                    let mut target = None;
                    for case in cases {
                        let guard = case.single_guard().ok_or_else(|| SimError::Payload {
                            phase: name.clone(),
                            reason: "compound guards cannot be executed".into(),
                        })?;
                        let holds = guard
                            .evaluate(&payload)
                            .map_err(|e| SimError::Payload { phase: name.clone(), reason: e.to_string() })?;
                        if holds {
                            target = case.next.clone();
                            break;
                        }
                    }
                    let target =
                        target.or_else(|| defaults.first().cloned()).ok_or_else(|| SimError::NoRoute(name.clone()))?;
                    if matches!(shape, Interpreter::Aws | Interpreter::Google) {
                        deps = vec![self.control("choice", Some(&name), 1, deps)];
                    }
                    self.routes.insert(name.clone(), target.clone());
                    current = Some(target);
                    continue;
                }
                PhaseKind::Parallel { branches } => {
                    match shape {
                        Interpreter::Aws | Interpreter::Google => {
                            deps = vec![self.control("parallel", Some(&name), 1, deps)];
                        }
                        _ => {}
                    }
                    let stage = cursor.stage();
                    let mut outputs = Vec::new();
                    let mut exits = Vec::new();
                    let history = self.history;
                    for (b, members) in branches.iter().enumerate() {
                        let Some(entry) = members.first() else { continue };
                        let mut inner = Cursor::new(format!("{stage}/{b}/"));
                        let flow = self.sequence(entry, payload.clone(), deps.clone(), &mut inner, compensation)?;
                        outputs.push(flow.payload);
                        exits.extend(flow.exits);
                    }
                    if !exits.is_empty() {
                        deps = exits;
                    }
                    match shape {
                        Interpreter::Aws => deps = vec![self.control("parallel-join", Some(&name), 1, deps)],
                        Interpreter::Azure => {
                            let spawned = self.history - history;
                            self.history = history;
                            deps = self.awaken_after(deps, spawned.max(1));
                        }
                        _ => {}
                    }
                    payload = Value::Array(outputs);
                }
            }
            current = phase.next.clone();
        }
        Ok(Flow { payload, exits: deps })
    }

    /// One loop or repeat iteration: a sequential stage of its own.
    #[allow(clippy::too_many_arguments)]
    fn iteration(
        &mut self,
        phase: &str,
        func: &str,
        stage: &str,
        slot: u32,
        input: &Value,
        deps: Vec<usize>,
        compensation: bool,
    ) -> Result<(Vec<usize>, Value), SimError> {
        let shape = self.model.interpreter;
        let (pre, post) = match shape {
            Interpreter::Aws => (1, 0),
            Interpreter::Google => (1, 1),
            _ => (0, 0),
        };
        let call =
            Call { phase, function: func, stage, slot, step: 0, pre, post, stagger_us: 0, group: None, compensation };
        let (id, result) = self.job(call, input, deps)?;
        let out = result.map_err(|e| self.uncaught(phase, func, e, compensation))?;
        let mut exits = vec![id];
        if shape == Interpreter::Azure {
            exits = self.awaken_after(exits, 1);
        }
        Ok((exits, out))
    }

    fn uncaught(&self, phase: &str, function: &str, error: KernelError, compensation: bool) -> SimError {
        if compensation {
            return SimError::CompensationFailure {
                phase: phase.to_owned(),
                function: function.to_owned(),
                message: error.to_string(),
            };
        }
        match error {
            KernelError::Store(StoreError::MissingObject(key)) => SimError::MissingObject(key),
            other => SimError::KernelFailure {
                phase: phase.to_owned(),
                function: function.to_owned(),
                message: other.to_string(),
            },
        }
    }

    fn job(
        &mut self,
        call: Call<'_>,
        input: &Value,
        deps: Vec<usize>,
    ) -> Result<(usize, Result<Value, KernelError>), SimError> {
        let kernel_name = self.defn.function(call.function).map_or(call.function, |f| f.kernel_name());
        let kernel =
            self.kernels.get(kernel_name).ok_or_else(|| SimError::MissingKernel(kernel_name.to_owned()))?.clone();
        let (kv_mark, obj_mark) = (self.kv.log().len(), self.objects.log().len());
        let result = {
            let mut ctx = KernelContext {
                kv: &mut self.kv,
                objects: &mut self.objects,
                invocation: self.invocation,
                phase: call.phase,
                slot: call.slot,
            };
            kernel.invoke(input, &mut ctx)
        };
        let storage = self.model.storage;
        let storage_us: u64 = self.kv.log()[kv_mark..]
            .iter()
            .chain(&self.objects.log()[obj_mark..])
            .map(|op| storage.transfer_us(op.bytes))
            .sum();
        let (run_us, payload_out, value) = match result {
            Ok(out) => {
                let bytes = out.payload_bytes.unwrap_or_else(|| size_of(&out.payload));
                (self.model.inflate(out.compute_us) + storage_us, bytes, Ok(out.payload))
            }
            Err(e) => (storage_us, 0, Err(e)),
        };
        let return_us = match self.model.payload_threshold_bytes {
            Some(limit) if payload_out > limit => 2 * storage.transfer_us(payload_out),
            _ => 0,
        };
        let pool = match self.model.pool {
            PoolScope::PerFunction => call.function.to_owned(),
            PoolScope::Shared => SHARED_POOL.to_owned(),
        };
        let overhead = self.model.per_transition_overhead_us;
        self.charged += call.pre + call.post;
        let job = Job {
            function: call.function.to_owned(),
            phase: call.phase.to_owned(),
            stage: call.stage.to_owned(),
            slot: call.slot,
            step: call.step,
            pool,
            pre_us: call.pre * overhead,
            post_us: call.post * overhead,
            stagger_us: call.stagger_us,
            run_us,
            return_us,
            payload_in: size_of(input),
            payload_out,
            failed: value.is_err(),
            compensation: call.compensation,
            group: call.group,
        };
        let id = self.push(NodeKind::Job(Box::new(job)), deps);
        Ok((id, value))
    }
}

/// Input of a failure handler: the failed task's input with the error
/// attached.
fn handler_input(input: Value, error: &KernelError) -> Value {
    match input {
        Value::Object(mut map) => {
            map.insert("error".into(), Value::String(error.to_string()));
            Value::Object(map)
        }
        other => json!({"input": other, "error": error.to_string()}),
    }
}
