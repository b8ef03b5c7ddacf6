use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::model::Interpreter;
use super::store::StoreOp;
use crate::net::FunctionSlot;
use crate::transcribe::ExecutionShape;

/// One function execution. Times are virtual microseconds; `start_us` is
/// when the kernel begins, after any cold or warm start latency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionEvent {
    pub invocation: u32,
    /// Position in the invocation's plan; unique per invocation.
    pub id: u32,
    pub function: String,
    pub phase: String,
    /// Stage path: `/`-separated stage indices, with the branch index of a
    /// parallel phase between a stage and the stages of the branch.
    pub stage: String,
    pub slot: u32,
    pub step: u32,
    pub dispatch_us: u64,
    pub start_us: u64,
    pub end_us: u64,
    pub container: String,
    pub cold: bool,
    pub payload_in_bytes: u64,
    pub payload_out_bytes: u64,
    pub failed: bool,
    /// Runs inside a failure-handler chain.
    pub compensation: bool,
}

impl FunctionEvent {
    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }

    pub fn slot(&self) -> FunctionSlot {
        FunctionSlot { phase: self.phase.clone(), function: self.function.clone(), slot: self.slot, step: self.step }
    }

    pub fn stage_path(&self) -> Vec<u32> {
        self.stage.split('/').filter_map(|s| s.parse().ok()).collect()
    }
}

/// Time the orchestrator itself spent: a coordinator transition, a state
/// transition, or an orchestrator replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatorEvent {
    pub invocation: u32,
    pub label: String,
    pub phase: Option<String>,
    pub start_us: u64,
    pub end_us: u64,
}

impl CoordinatorEvent {
    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub invocation: u32,
    pub workflow: String,
    pub model: String,
    pub interpreter: Interpreter,
    pub seed: u64,
    pub submitted_us: u64,
    pub completed_us: u64,
    /// Sorted by `(start_us, id)`.
    pub events: Vec<FunctionEvent>,
    pub coordinators: Vec<CoordinatorEvent>,
    /// Overhead of state transitions charged inside function dispatch, in
    /// transition units (see the interpreter of the model).
    pub charged_transitions: u64,
    pub fanouts: BTreeMap<String, usize>,
    pub routes: BTreeMap<String, String>,
    pub failed: BTreeSet<String>,
    pub store_ops: Vec<StoreOp>,
    /// Items left in the key-value store when the invocation finished.
    pub kv_items: usize,
    pub output: Value,
}

impl ExecutionTrace {
    pub fn total_runtime_us(&self) -> u64 {
        self.completed_us - self.submitted_us
    }

    pub fn shape(&self) -> ExecutionShape {
        ExecutionShape { fanouts: self.fanouts.clone(), routes: self.routes.clone(), failed: self.failed.clone() }
    }

    /// Function executions in start order, as replay steps.
    pub fn replay_steps(&self) -> Vec<FunctionSlot> {
        self.events.iter().map(FunctionEvent::slot).collect()
    }

    /// Total orchestrator time (billable orchestration on Azure).
    pub fn orchestrator_us(&self) -> u64 {
        self.coordinators.iter().map(CoordinatorEvent::duration_us).sum()
    }

    pub fn forward_events(&self) -> impl Iterator<Item = &FunctionEvent> {
        self.events.iter().filter(|e| !e.compensation)
    }

    pub fn compensation_events(&self) -> impl Iterator<Item = &FunctionEvent> {
        self.events.iter().filter(|e| e.compensation)
    }

    /// One JSON object per function event, fields in declaration order.
    pub fn event_lines(&self) -> Vec<String> {
        self.events.iter().map(|e| serde_json::to_string(e).expect("events serialize")).collect()
    }
}
