use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;

use super::store::{KeyValueStore, ObjectStore, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Store handles and position of the running function.
pub struct KernelContext<'a> {
    pub kv: &'a mut KeyValueStore,
    pub objects: &'a mut ObjectStore,
    pub invocation: u32,
    pub phase: &'a str,
    /// Element or iteration index within the phase.
    pub slot: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelOutput {
    pub payload: Value,
    /// Modeled compute time, before host suspension.
    pub compute_us: u64,
    /// Size of the returned payload when it differs from the JSON encoding,
    /// e.g. a stub that stands for a large binary result.
    pub payload_bytes: Option<u64>,
}

impl KernelOutput {
    pub fn new(payload: Value, compute_us: u64) -> KernelOutput {
        KernelOutput { payload, compute_us, payload_bytes: None }
    }

    pub fn with_bytes(mut self, bytes: u64) -> KernelOutput {
        self.payload_bytes = Some(bytes);
        self
    }
}

pub trait Kernel: Send + Sync {
    fn invoke(&self, input: &Value, ctx: &mut KernelContext<'_>) -> Result<KernelOutput, KernelError>;
}

impl<F> Kernel for F
where
    F: Fn(&Value, &mut KernelContext<'_>) -> Result<KernelOutput, KernelError> + Send + Sync,
{
    fn invoke(&self, input: &Value, ctx: &mut KernelContext<'_>) -> Result<KernelOutput, KernelError> {
        self(input, ctx)
    }
}

/// Kernel that returns its input after a fixed compute time.
pub fn sleep(compute_us: u64) -> Arc<dyn Kernel> {
    Arc::new(move |input: &Value, _: &mut KernelContext<'_>| Ok(KernelOutput::new(input.clone(), compute_us)))
}

/// Kernels by name. Functions are looked up by their kernel name.
#[derive(Clone, Default)]
pub struct Kernels(BTreeMap<String, Arc<dyn Kernel>>);

impl Kernels {
    pub fn new() -> Kernels {
        Kernels::default()
    }

    pub fn with(mut self, name: &str, kernel: Arc<dyn Kernel>) -> Kernels {
        self.insert(name, kernel);
        self
    }

    pub fn insert(&mut self, name: &str, kernel: Arc<dyn Kernel>) {
        self.0.insert(name.to_owned(), kernel);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Kernel>> {
        self.0.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for Kernels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.0.keys()).finish()
    }
}
