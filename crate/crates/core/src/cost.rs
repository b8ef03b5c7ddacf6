//! Per-execution cost estimates: function compute, invocations and
//! orchestration, in exact decimal money.

use std::fmt;
use std::path::Path;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::definition::WorkflowDefinition;
use crate::sim::{ExecutionTrace, OpKind, StoreKind, StoreOp};
use crate::transcribe::{transitions, TranscribeError, TransitionCount};
use crate::Platform;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("trace {invocation} was simulated for {found}, not {expected}")]
    PlatformMismatch { invocation: u32, found: String, expected: Platform },
    #[error("no key-value rates configured for {0}")]
    MissingRates(Platform),
    #[error("memory must be positive, got {0} GB")]
    BadMemory(Decimal),
    #[error("cannot read pricing file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse pricing: {0}")]
    Parse(String),
    #[error("negative rate in pricing table")]
    NegativeRate,
    #[error(transparent)]
    Census(#[from] TranscribeError),
}

pub type Result<T> = std::result::Result<T, CostError>;

const NANO: Decimal = Decimal::from_parts(1_000_000_000, 0, 0, false, 0);

/// Money in integer nano-USD.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Usd(pub u128);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    /// Rounds half-even to the nano-dollar.
    pub fn from_decimal(value: Decimal) -> Usd {
        let nanos = (value * NANO).round_dp_with_strategy(0, RoundingStrategy::MidpointNearestEven);
        Usd(nanos.try_into().unwrap_or(0))
    }

    pub fn to_decimal(self) -> Decimal {
        Decimal::from(self.0) / NANO
    }

    pub fn nanos(self) -> u128 {
        self.0
    }
}

impl std::ops::Add for Usd {
    type Output = Usd;

    fn add(self, other: Usd) -> Usd {
        Usd(self.0 + other.0)
    }
}

impl std::iter::Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        iter.fold(Usd::ZERO, |a, b| a + b)
    }
}

/// Four decimals, half-even.
impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.to_decimal().round_dp_with_strategy(4, RoundingStrategy::MidpointNearestEven);
        write!(f, "{d:.4}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Orchestration {
    /// One rate per 1000 state transitions.
    PerTransition {
        #[serde(with = "rust_decimal::serde::str")]
        per_thousand: Decimal,
    },
    /// Separate rates for internal steps and external function calls.
    Split {
        #[serde(with = "rust_decimal::serde::str")]
        internal_per_thousand: Decimal,
        #[serde(with = "rust_decimal::serde::str")]
        external_per_thousand: Decimal,
    },
    /// Billed like a function for the time the orchestrator runs, plus a
    /// rate per 1000 orchestrator awakenings.
    Duration {
        #[serde(with = "rust_decimal::serde::str")]
        per_gb_s: Decimal,
        #[serde(with = "rust_decimal::serde::str")]
        per_thousand: Decimal,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformRates {
    #[serde(with = "rust_decimal::serde::str")]
    pub compute_per_gb_s: Decimal,
    #[serde(with = "rust_decimal::serde::str")]
    pub invocation_per_million: Decimal,
    pub orchestration: Orchestration,
}

/// Key-value billing rules. Rates are per million units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KvRates {
    /// Write units per started `write_unit_bytes`, read units per started
    /// `read_unit_bytes`.
    SizeIncrements {
        write_unit_bytes: u64,
        read_unit_bytes: u64,
        #[serde(with = "rust_decimal::serde::str")]
        per_million_writes: Decimal,
        #[serde(with = "rust_decimal::serde::str")]
        per_million_reads: Decimal,
    },
    /// Request units per started KB: `read_ru_per_kb` for reads and
    /// `write_ru_per_kb` for every mutation.
    RequestUnits {
        #[serde(with = "rust_decimal::serde::str")]
        read_ru_per_kb: Decimal,
        #[serde(with = "rust_decimal::serde::str")]
        write_ru_per_kb: Decimal,
        #[serde(with = "rust_decimal::serde::str")]
        per_million_ru: Decimal,
    },
    /// Flat price per operation regardless of size.
    Flat {
        #[serde(with = "rust_decimal::serde::str")]
        per_million_reads: Decimal,
        #[serde(with = "rust_decimal::serde::str")]
        per_million_writes: Decimal,
        #[serde(with = "rust_decimal::serde::str")]
        per_million_deletes: Decimal,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvPricing {
    #[serde(default)]
    pub aws: Option<KvRates>,
    #[serde(default)]
    pub google: Option<KvRates>,
    #[serde(default)]
    pub azure: Option<KvRates>,
}

impl KvPricing {
    pub fn rates(&self, platform: Platform) -> Option<&KvRates> {
        match platform {
            Platform::Aws => self.aws.as_ref(),
            Platform::Google => self.google.as_ref(),
            Platform::Azure => self.azure.as_ref(),
        }
    }

    /// Public list prices at the time of writing; illustrative only.
    pub fn illustrative() -> KvPricing {
        KvPricing {
            aws: Some(KvRates::SizeIncrements {
                write_unit_bytes: 1024,
                read_unit_bytes: 4096,
                per_million_writes: Decimal::new(125, 2),
                per_million_reads: Decimal::new(25, 2),
            }),
            google: Some(KvRates::Flat {
                per_million_reads: Decimal::new(6, 1),
                per_million_writes: Decimal::new(18, 1),
                per_million_deletes: Decimal::new(2, 1),
            }),
            azure: Some(KvRates::RequestUnits {
                read_ru_per_kb: Decimal::ONE,
                write_ru_per_kb: Decimal::new(5, 0),
                per_million_ru: Decimal::new(25, 2),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricingTable {
    pub aws: PlatformRates,
    pub google: PlatformRates,
    pub azure: PlatformRates,
    #[serde(default)]
    pub key_value: KvPricing,
    /// Price of one object-storage operation, identical on every platform.
    #[serde(default, with = "rust_decimal::serde::str")]
    pub object_op: Decimal,
}

impl Default for PricingTable {
    fn default() -> PricingTable {
        let d = |s: &str| s.parse::<Decimal>().expect("literal rate");
        PricingTable {
            aws: PlatformRates {
                compute_per_gb_s: d("0.0000167"),
                invocation_per_million: d("0.20"),
                orchestration: Orchestration::PerTransition { per_thousand: d("0.025") },
            },
            google: PlatformRates {
                compute_per_gb_s: d("0.0000025"),
                invocation_per_million: d("0.40"),
                orchestration: Orchestration::Split {
                    internal_per_thousand: d("0.01"),
                    external_per_thousand: d("0.025"),
                },
            },
            azure: PlatformRates {
                compute_per_gb_s: d("0.000016"),
                invocation_per_million: d("0.20"),
                orchestration: Orchestration::Duration { per_gb_s: d("0.000016"), per_thousand: d("0.000355") },
            },
            key_value: KvPricing::default(),
            object_op: Decimal::ZERO,
        }
    }
}

impl PricingTable {
    pub fn rates(&self, platform: Platform) -> &PlatformRates {
        match platform {
            Platform::Aws => &self.aws,
            Platform::Google => &self.google,
            Platform::Azure => &self.azure,
        }
    }

    pub fn load(path: &Path) -> Result<PricingTable> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CostError::Io { path: path.display().to_string(), source })?;
        let table: PricingTable = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CostError::Parse(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| CostError::Parse(e.to_string()))?
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let mut rates = vec![self.object_op];
        for p in [&self.aws, &self.google, &self.azure] {
            rates.extend([p.compute_per_gb_s, p.invocation_per_million]);
            match &p.orchestration {
                Orchestration::PerTransition { per_thousand } => rates.push(*per_thousand),
                Orchestration::Split { internal_per_thousand, external_per_thousand } => {
                    rates.extend([*internal_per_thousand, *external_per_thousand])
                }
                Orchestration::Duration { per_gb_s, per_thousand } => rates.extend([*per_gb_s, *per_thousand]),
            }
        }
        if rates.iter().any(|r| r.is_sign_negative() && !r.is_zero()) {
            return Err(CostError::NegativeRate);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub compute: Usd,
    pub invocation: Usd,
    pub orchestration: Usd,
    pub total: Usd,
    pub executions: u64,
}

impl CostBreakdown {
    fn new(compute: Usd, invocation: Usd, orchestration: Usd, executions: u64) -> CostBreakdown {
        CostBreakdown { compute, invocation, orchestration, total: compute + invocation + orchestration, executions }
    }

    /// Average cost of 1000 executions.
    pub fn per_thousand(&self) -> CostBreakdown {
        if self.executions == 0 {
            return CostBreakdown::default();
        }
        let scale = |u: Usd| Usd::from_decimal(u.to_decimal() * Decimal::from(1000) / Decimal::from(self.executions));
        CostBreakdown::new(scale(self.compute), scale(self.invocation), scale(self.orchestration), 1000)
    }
}

/// Compute, invocation and orchestration cost of `traces`, each of which
/// took `census` transitions.
pub fn estimate(
    traces: &[ExecutionTrace],
    census: TransitionCount,
    memory_gb: Decimal,
    pricing: &PricingTable,
    platform: Platform,
) -> Result<CostBreakdown> {
    let per_trace = vec![census; traces.len()];
    estimate_each(traces, &per_trace, memory_gb, pricing, platform)
}

/// Like [`estimate`], with the census of every trace computed from its own
/// execution shape.
pub fn estimate_from_shapes(
    defn: &WorkflowDefinition,
    traces: &[ExecutionTrace],
    memory_gb: Decimal,
    pricing: &PricingTable,
    platform: Platform,
) -> Result<CostBreakdown> {
    let census =
        traces.iter().map(|t| transitions(defn, platform, &t.shape())).collect::<std::result::Result<Vec<_>, _>>()?;
    estimate_each(traces, &census, memory_gb, pricing, platform)
}

fn estimate_each(
    traces: &[ExecutionTrace],
    census: &[TransitionCount],
    memory_gb: Decimal,
    pricing: &PricingTable,
    platform: Platform,
) -> Result<CostBreakdown> {
    if memory_gb <= Decimal::ZERO {
        return Err(CostError::BadMemory(memory_gb));
    }
    for t in traces {
        if t.interpreter.platform() != Some(platform) {
            return Err(CostError::PlatformMismatch {
                invocation: t.invocation,
                found: t.model.clone(),
                expected: platform,
            });
        }
    }
    let rates = pricing.rates(platform);
    let micros = Decimal::from(1_000_000);
    let busy_us: u64 = traces.iter().flat_map(|t| &t.events).map(|e| e.duration_us()).sum();
    let gb_s = Decimal::from(busy_us) / micros * memory_gb;
    let compute = gb_s * rates.compute_per_gb_s;
    let calls: usize = traces.iter().map(|t| t.events.len()).sum();
    let invocation = Decimal::from(calls as u64) / micros * rates.invocation_per_million;
    let thousand = Decimal::from(1000);
    let internal: u64 = census.iter().map(|c| c.internal).sum();
    let external: u64 = census.iter().map(|c| c.external).sum();
    let orchestration = match &rates.orchestration {
        Orchestration::PerTransition { per_thousand } => Decimal::from(internal + external) / thousand * per_thousand,
        Orchestration::Split { internal_per_thousand, external_per_thousand } => {
            (Decimal::from(internal) * internal_per_thousand + Decimal::from(external) * external_per_thousand)
                / thousand
        }
        Orchestration::Duration { per_gb_s, per_thousand } => {
            let orchestrator_us: u64 = traces.iter().map(ExecutionTrace::orchestrator_us).sum();
            Decimal::from(orchestrator_us) / micros * memory_gb * per_gb_s
                + Decimal::from(internal + external) / thousand * per_thousand
        }
    };
    Ok(CostBreakdown::new(
        Usd::from_decimal(compute),
        Usd::from_decimal(invocation),
        Usd::from_decimal(orchestration),
        traces.len() as u64,
    ))
}

/// Number of `(reads, writes, deletes)` among key-value operations.
pub fn kv_op_counts(ops: &[StoreOp]) -> (usize, usize, usize) {
    let kv = ops.iter().filter(|o| o.store == StoreKind::KeyValue);
    kv.fold((0, 0, 0), |(r, w, d), o| match o.op {
        OpKind::Retrieve | OpKind::Get => (r + 1, w, d),
        OpKind::Delete => (r, w, d + 1),
        _ => (r, w + 1, d),
    })
}

fn started_units(bytes: u64, unit: u64) -> u64 {
    bytes.div_ceil(unit.max(1)).max(1)
}

/// Key-value storage cost of `ops` under the platform's billing rule.
/// Object-storage operations are charged `object_op` each.
pub fn nosql_cost(ops: &[StoreOp], platform: Platform, pricing: &PricingTable) -> Result<Usd> {
    if ops.is_empty() {
        return Ok(Usd::ZERO);
    }
    let kv: Vec<&StoreOp> = ops.iter().filter(|o| o.store == StoreKind::KeyValue).collect();
    let objects = ops.len() - kv.len();
    let million = Decimal::from(1_000_000);
    let mut usd = Decimal::from(objects as u64) * pricing.object_op;
    if !kv.is_empty() {
        let rates = pricing.key_value.rates(platform).ok_or(CostError::MissingRates(platform))?;
        usd += match rates {
            KvRates::SizeIncrements { write_unit_bytes, read_unit_bytes, per_million_writes, per_million_reads } => {
                let (mut reads, mut writes) = (0u64, 0u64);
                for o in &kv {
                    if o.op.is_write() {
                        writes += started_units(o.bytes, *write_unit_bytes);
                    } else {
                        reads += started_units(o.bytes, *read_unit_bytes);
                    }
                }
                (Decimal::from(writes) * per_million_writes + Decimal::from(reads) * per_million_reads) / million
            }
            KvRates::RequestUnits { read_ru_per_kb, write_ru_per_kb, per_million_ru } => {
                let ru: Decimal = kv
                    .iter()
                    .map(|o| {
                        let kb = Decimal::from(started_units(o.bytes, 1024));
                        kb * if o.op.is_write() { *write_ru_per_kb } else { *read_ru_per_kb }
                    })
                    .sum();
                ru * per_million_ru / million
            }
            KvRates::Flat { per_million_reads, per_million_writes, per_million_deletes } => {
                let (r, w, d) = kv_op_counts(ops);
                (Decimal::from(r as u64) * per_million_reads
                    + Decimal::from(w as u64) * per_million_writes
                    + Decimal::from(d as u64) * per_million_deletes)
                    / million
            }
        };
    }
    Ok(Usd::from_decimal(usd))
}
