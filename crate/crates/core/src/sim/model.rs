use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Platform;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse model: {0}")]
    Parse(String),
    #[error("invalid model `{name}`: {reason}")]
    Invalid { name: String, reason: String },
    #[error("unknown builtin model `{0}` (expected aws-like, gcp-like or azure-like)")]
    UnknownBuiltin(String),
}

/// Which orchestrator the simulator imitates when charging overhead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpreter {
    /// One coordinator delay before every executed phase.
    Generic,
    /// One delay per state-machine transition of the AWS program.
    Aws,
    /// One delay per executed step of the Google program.
    Google,
    /// Orchestrator replays after every awaited batch of activities.
    Azure,
}

impl Interpreter {
    pub fn platform(self) -> Option<Platform> {
        match self {
            Interpreter::Generic => None,
            Interpreter::Aws => Some(Platform::Aws),
            Interpreter::Google => Some(Platform::Google),
            Interpreter::Azure => Some(Platform::Azure),
        }
    }
}

/// Whether containers are reserved per function or shared by a whole
/// function app.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolScope {
    PerFunction,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Latency {
    Fixed {
        us: u64,
    },
    /// Uniform over `[min_us, max_us]`, drawn per execution from the seed.
    Uniform {
        min_us: u64,
        max_us: u64,
    },
}

impl Latency {
    pub fn max_us(&self) -> u64 {
        match *self {
            Latency::Fixed { us } => us,
            Latency::Uniform { max_us, .. } => max_us,
        }
    }
}

/// Affine cost of one storage transfer: `latency_us + bytes / bandwidth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageModel {
    pub latency_us: u64,
    pub bandwidth_bytes_per_s: u64,
}

impl StorageModel {
    pub fn transfer_us(&self, bytes: u64) -> u64 {
        let transfer = if self.bandwidth_bytes_per_s == 0 {
            0
        } else {
            (bytes as u128 * 1_000_000 / self.bandwidth_bytes_per_s as u128) as u64
        };
        self.latency_us + transfer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suspension {
    pub memory_mb: u32,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformModel {
    pub name: String,
    pub interpreter: Interpreter,
    /// Maximum containers alive at once, per pool; absent means unlimited.
    #[serde(default)]
    pub container_cap: Option<u32>,
    pub pool: PoolScope,
    pub cold_start: Latency,
    pub warm_start_us: u64,
    pub per_transition_overhead_us: u64,
    /// Extra replay time per activity already in the orchestration history.
    #[serde(default)]
    pub replay_per_event_us: u64,
    /// Delay between dispatching consecutive map elements.
    #[serde(default)]
    pub fanout_dispatch_us: u64,
    pub storage: StorageModel,
    /// Return payloads above this size travel through storage.
    #[serde(default)]
    pub payload_threshold_bytes: Option<u64>,
    /// Suspension share by memory size; the entry with the largest memory
    /// not above the configured size applies.
    #[serde(default)]
    pub suspension: Vec<Suspension>,
    /// Concurrency limit of one map phase; absent means unlimited.
    #[serde(default)]
    pub max_parallelism: Option<u32>,
    pub memory_mb: u32,
}

impl PlatformModel {
    pub fn builtin(name: &str) -> Result<PlatformModel, ModelError> {
        match name {
            "aws-like" => Ok(aws_like()),
            "gcp-like" | "google-like" => Ok(gcp_like()),
            "azure-like" => Ok(azure_like()),
            other => Err(ModelError::UnknownBuiltin(other.to_owned())),
        }
    }

    pub fn builtins() -> Vec<PlatformModel> {
        vec![aws_like(), gcp_like(), azure_like()]
    }

    /// Loads a TOML or JSON model file (by extension; TOML otherwise).
    pub fn load(path: &Path) -> Result<PlatformModel, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
        let json = path.extension().is_some_and(|e| e == "json");
        PlatformModel::parse(&text, json)
    }

    pub fn parse(text: &str, json: bool) -> Result<PlatformModel, ModelError> {
        let model: PlatformModel = if json {
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("models serialize")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |reason: &str| Err(ModelError::Invalid { name: self.name.clone(), reason: reason.to_owned() });
        if self.container_cap == Some(0) {
            return invalid("container_cap must be at least 1");
        }
        if self.max_parallelism == Some(0) {
            return invalid("max_parallelism must be at least 1");
        }
        if let Latency::Uniform { min_us, max_us } = self.cold_start {
            if min_us > max_us {
                return invalid("cold_start min_us exceeds max_us");
            }
        }
        if self.suspension.iter().any(|s| !(0.0..1.0).contains(&s.share)) {
            return invalid("suspension shares must lie in [0, 1)");
        }
        if self.memory_mb == 0 {
            return invalid("memory_mb must be positive");
        }
        Ok(())
    }

    pub fn suspension_share(&self) -> f64 {
        self.suspension
            .iter()
            .filter(|s| s.memory_mb <= self.memory_mb)
            .max_by_key(|s| s.memory_mb)
            .or_else(|| self.suspension.iter().min_by_key(|s| s.memory_mb))
            .map_or(0.0, |s| s.share)
    }

    /// Wall time of a compute burst once host suspension is added.
    pub fn inflate(&self, compute_us: u64) -> u64 {
        let share = self.suspension_share();
        if share == 0.0 {
            return compute_us;
        }
        (compute_us as f64 / (1.0 - share)).round() as u64
    }

    /// A model that charges nothing anywhere: handy for tests.
    pub fn ideal(name: &str) -> PlatformModel {
        PlatformModel {
            name: name.to_owned(),
            interpreter: Interpreter::Generic,
            container_cap: None,
            pool: PoolScope::PerFunction,
            cold_start: Latency::Fixed { us: 0 },
            warm_start_us: 0,
            per_transition_overhead_us: 0,
            replay_per_event_us: 0,
            fanout_dispatch_us: 0,
            storage: StorageModel { latency_us: 0, bandwidth_bytes_per_s: 0 },
            payload_threshold_bytes: None,
            suspension: Vec::new(),
            max_parallelism: None,
            memory_mb: 1024,
        }
    }
}

// The defaults below are illustrative calibrations that reproduce the
// qualitative behaviour of each platform, not measured values.

fn aws_like() -> PlatformModel {
    PlatformModel {
        name: "aws-like".into(),
        interpreter: Interpreter::Aws,
        container_cap: None,
        pool: PoolScope::PerFunction,
        cold_start: Latency::Uniform { min_us: 250_000, max_us: 350_000 },
        warm_start_us: 5_000,
        per_transition_overhead_us: 30_000,
        replay_per_event_us: 0,
        fanout_dispatch_us: 0,
        storage: StorageModel { latency_us: 20_000, bandwidth_bytes_per_s: 80_000_000 },
        payload_threshold_bytes: Some(262_144),
        suspension: vec![
            Suspension { memory_mb: 128, share: 0.3 },
            Suspension { memory_mb: 1024, share: 0.1 },
            Suspension { memory_mb: 2048, share: 0.02 },
        ],
        max_parallelism: Some(40),
        memory_mb: 1024,
    }
}

fn gcp_like() -> PlatformModel {
    PlatformModel {
        name: "gcp-like".into(),
        interpreter: Interpreter::Google,
        container_cap: Some(30),
        pool: PoolScope::PerFunction,
        cold_start: Latency::Uniform { min_us: 400_000, max_us: 700_000 },
        warm_start_us: 10_000,
        per_transition_overhead_us: 40_000,
        replay_per_event_us: 0,
        fanout_dispatch_us: 0,
        storage: StorageModel { latency_us: 30_000, bandwidth_bytes_per_s: 60_000_000 },
        payload_threshold_bytes: Some(524_288),
        suspension: vec![
            Suspension { memory_mb: 128, share: 0.4 },
            Suspension { memory_mb: 1024, share: 0.15 },
            Suspension { memory_mb: 2048, share: 0.05 },
        ],
        max_parallelism: Some(20),
        memory_mb: 1024,
    }
}

fn azure_like() -> PlatformModel {
    PlatformModel {
        name: "azure-like".into(),
        interpreter: Interpreter::Azure,
        container_cap: Some(10),
        pool: PoolScope::Shared,
        cold_start: Latency::Uniform { min_us: 1_000_000, max_us: 2_000_000 },
        warm_start_us: 50_000,
        per_transition_overhead_us: 2_000_000,
        replay_per_event_us: 150_000,
        fanout_dispatch_us: 400_000,
        storage: StorageModel { latency_us: 150_000, bandwidth_bytes_per_s: 20_000_000 },
        payload_threshold_bytes: Some(16_384),
        suspension: vec![Suspension { memory_mb: 128, share: 0.25 }, Suspension { memory_mb: 1536, share: 0.1 }],
        max_parallelism: None,
        memory_mb: 1536,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_round_trip() {
        for m in PlatformModel::builtins() {
            m.validate().unwrap();
            assert_eq!(PlatformModel::parse(&m.to_toml(), false).unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(PlatformModel::parse(&json, true).unwrap(), m);
        }
        assert!(matches!(PlatformModel::builtin("nope"), Err(ModelError::UnknownBuiltin(_))));
    }

    #[test]
    fn rejects_bad_values() {
        let mut m = PlatformModel::ideal("x");
        m.container_cap = Some(0);
        assert!(m.validate().is_err());
        let mut m = PlatformModel::ideal("x");
        m.suspension.push(Suspension { memory_mb: 128, share: 1.0 });
        assert!(m.validate().is_err());
    }

    #[test]
    fn suspension_lookup() {
        let mut m = PlatformModel::ideal("x");
        m.suspension = vec![Suspension { memory_mb: 128, share: 0.3 }, Suspension { memory_mb: 1024, share: 0.1 }];
        m.memory_mb = 512;
        assert_eq!(m.suspension_share(), 0.3);
        m.memory_mb = 2048;
        assert_eq!(m.suspension_share(), 0.1);
        m.memory_mb = 64;
        assert_eq!(m.suspension_share(), 0.3);
        m.memory_mb = 1024;
        assert_eq!(m.inflate(900), 1000);
    }

    #[test]
    fn storage_is_affine() {
        let s = StorageModel { latency_us: 100, bandwidth_bytes_per_s: 1_000_000 };
        assert_eq!(s.transfer_us(0), 100);
        assert_eq!(s.transfer_us(500_000), 500_100);
    }
}
