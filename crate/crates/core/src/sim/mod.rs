//! Deterministic discrete-event platform simulator.
//!
//! A run has two passes. Planning executes the kernels in dependency order
//! and records a DAG of function jobs and orchestrator nodes; timing replays
//! that DAG on a virtual clock (integer microseconds) against a container
//! pool with cold/warm starts, caps and FIFO queueing. Kernel outcomes never
//! depend on timing, so the two passes are independent.

mod engine;
pub mod kernel;
pub mod model;
mod plan;
pub mod store;
pub mod trace;

use serde_json::Value;
use thiserror::Error;

pub use engine::Pools;
pub use kernel::{sleep, Kernel, KernelContext, KernelError, KernelOutput, Kernels};
pub use model::{Interpreter, Latency, ModelError, PlatformModel, PoolScope, StorageModel, Suspension};
pub use store::{ItemKey, KeyValueStore, ObjectMeta, ObjectStore, OpKind, StoreError, StoreKind, StoreOp};
pub use trace::{CoordinatorEvent, ExecutionTrace, FunctionEvent};

use crate::definition::{validate, WorkflowDefinition};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid definition: {0}")]
    InvalidDefinition(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("no kernel registered for `{0}`")]
    MissingKernel(String),
    #[error("unknown phase `{0}`")]
    UnknownPhase(String),
    #[error("function `{function}` failed in phase `{phase}`: {message}")]
    KernelFailure { phase: String, function: String, message: String },
    #[error("compensation `{function}` failed in phase `{phase}`: {message}")]
    CompensationFailure { phase: String, function: String, message: String },
    #[error("object `{0}` does not exist")]
    MissingObject(String),
    #[error("phase `{phase}`: {reason}")]
    Payload { phase: String, reason: String },
    #[error("switch `{0}` matched no case and has no default")]
    NoRoute(String),
    #[error("a burst needs at least one invocation and one input")]
    EmptyBurst,
}

pub type Result<T> = std::result::Result<T, SimError>;

/// A simulated platform whose container pool and clock persist across
/// bursts: a second burst starts when the previous one finished and finds
/// its containers warm.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: PlatformModel,
    seed: u64,
    pools: Pools,
    clock_us: u64,
    next_invocation: u32,
}

impl Simulator {
    pub fn new(model: PlatformModel, seed: u64) -> Result<Simulator> {
        model.validate().map_err(|e| SimError::InvalidModel(e.to_string()))?;
        Ok(Simulator { model, seed, pools: Pools::default(), clock_us: 0, next_invocation: 0 })
    }

    pub fn model(&self) -> &PlatformModel {
        &self.model
    }

    pub fn clock_us(&self) -> u64 {
        self.clock_us
    }

    pub fn pools(&self) -> &Pools {
        &self.pools
    }

    pub fn run(&mut self, defn: &WorkflowDefinition, input: &Value, kernels: &Kernels) -> Result<ExecutionTrace> {
        let mut traces = self.run_burst(defn, std::slice::from_ref(input), kernels, 1)?;
        Ok(traces.remove(0))
    }

    /// Submits `burst_size` invocations at once; invocation `i` takes
    /// `inputs[i % inputs.len()]`.
    pub fn run_burst(
        &mut self,
        defn: &WorkflowDefinition,
        inputs: &[Value],
        kernels: &Kernels,
        burst_size: usize,
    ) -> Result<Vec<ExecutionTrace>> {
        if burst_size == 0 || inputs.is_empty() {
            return Err(SimError::EmptyBurst);
        }
        let report = validate(defn);
        if !report.is_valid() {
            let msgs: Vec<String> = report.errors.iter().map(ToString::to_string).collect();
            return Err(SimError::InvalidDefinition(msgs.join("; ")));
        }
        for f in defn.referenced_functions() {
            let name = defn.function(f).map_or(f, |s| s.kernel_name());
            if kernels.get(name).is_none() {
                return Err(SimError::MissingKernel(name.to_owned()));
            }
        }
        let plans = (0..burst_size)
            .map(|i| {
                let invocation = self.next_invocation + i as u32;
                plan::Planner::new(defn, kernels, &self.model, invocation).plan(inputs[i % inputs.len()].clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let traces = engine::execute(&plans, &self.model, &mut self.pools, self.seed, self.clock_us, &defn.name);
        self.next_invocation += burst_size as u32;
        self.clock_us = traces.iter().map(|t| t.completed_us).max().unwrap_or(self.clock_us);
        Ok(traces)
    }
}

/// Runs one invocation on a fresh platform.
pub fn run(
    defn: &WorkflowDefinition,
    input: &Value,
    model: &PlatformModel,
    kernels: &Kernels,
    seed: u64,
) -> Result<ExecutionTrace> {
    Simulator::new(model.clone(), seed)?.run(defn, input, kernels)
}

/// Runs `burst_size` simultaneous invocations on a fresh platform.
pub fn run_burst(
    defn: &WorkflowDefinition,
    inputs: &[Value],
    model: &PlatformModel,
    kernels: &Kernels,
    burst_size: usize,
    seed: u64,
) -> Result<Vec<ExecutionTrace>> {
    Simulator::new(model.clone(), seed)?.run_burst(defn, inputs, kernels, burst_size)
}
