//! Portable serverless workflows: a platform-agnostic definition language,
//! its workflow-net semantics, transcription to cloud orchestration formats,
//! a deterministic platform simulator, and the runtime/cost analysis built on
//! top of its traces.

pub mod bench;
pub mod cost;
pub mod definition;
pub mod metrics;
pub mod net;
pub mod platform;
pub mod sim;
pub mod transcribe;

pub use platform::Platform;
