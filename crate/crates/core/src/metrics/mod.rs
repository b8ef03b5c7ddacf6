//! Runtime analysis over execution traces: critical path and overhead,
//! scaling profiles, cold-start statistics, noise normalization and median
//! confidence intervals.

mod detour;
mod report;

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{ExecutionTrace, FunctionEvent};

pub use detour::{selfish_detour, DetourConfig, DetourEstimate};
pub use report::{decomposition_csv, runtime_csv, scaling_csv, BenchmarkReport, Percentiles};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("trace has no function events")]
    EmptyTrace,
    #[error("{0} is outside [0, 1)")]
    DomainError(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("confidence {0} is outside (0, 1)")]
    BadConfidence(f64),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRuntime {
    pub phase: String,
    pub start_us: u64,
    pub end_us: u64,
}

impl PhaseRuntime {
    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }
}

/// Earliest start to latest end of the functions of each phase, in order of
/// first start.
pub fn phase_runtimes(trace: &ExecutionTrace) -> Vec<PhaseRuntime> {
    let mut by_phase: BTreeMap<&str, PhaseRuntime> = BTreeMap::new();
    for e in &trace.events {
        let r = by_phase.entry(&e.phase).or_insert_with(|| PhaseRuntime {
            phase: e.phase.clone(),
            start_us: e.start_us,
            end_us: e.end_us,
        });
        r.start_us = r.start_us.min(e.start_us);
        r.end_us = r.end_us.max(e.end_us);
    }
    let mut out: Vec<PhaseRuntime> = by_phase.into_values().collect();
    out.sort_by(|a, b| (a.start_us, &a.phase).cmp(&(b.start_us, &b.phase)));
    out
}

/// Critical path `t_c`, overhead `t_o` and `total`, all in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub t_c: u64,
    pub t_o: u64,
    pub total: u64,
}

impl Decomposition {
    pub fn overhead_ratio(&self) -> f64 {
        if self.t_c == 0 {
            return f64::INFINITY;
        }
        self.t_o as f64 / self.t_c as f64
    }
}

/// Sums, over sequential stages, the longest function of each stage. A
/// parallel stage contributes its longest branch, where a branch costs the
/// sum over its own stages.
pub fn critical_path(trace: &ExecutionTrace) -> Result<Decomposition> {
    let first = trace.events.iter().map(|e| e.start_us).min().ok_or(MetricsError::EmptyTrace)?;
    let last = trace.events.iter().map(|e| e.end_us).max().ok_or(MetricsError::EmptyTrace)?;
    let paths: Vec<(Vec<u32>, &FunctionEvent)> = trace.events.iter().map(|e| (e.stage_path(), e)).collect();
    let refs: Vec<&(Vec<u32>, &FunctionEvent)> = paths.iter().collect();
    let t_c = stages_cost(&refs, 0);
    let total = last - first;
    Ok(Decomposition { t_c, t_o: total - t_c, total })
}

fn stages_cost(events: &[&(Vec<u32>, &FunctionEvent)], depth: usize) -> u64 {
    let mut stages: BTreeMap<u32, Vec<&(Vec<u32>, &FunctionEvent)>> = BTreeMap::new();
    for e in events {
        if let Some(&s) = e.0.get(depth) {
            stages.entry(s).or_default().push(e);
        }
    }
    stages
        .values()
        .map(|members| {
            let (flat, nested): (Vec<&&(Vec<u32>, &FunctionEvent)>, Vec<_>) =
                members.iter().partition(|e| e.0.len() == depth + 1);
            let own = flat.iter().map(|e| e.1.duration_us()).max().unwrap_or(0);
            let mut branches: BTreeMap<u32, Vec<&(Vec<u32>, &FunctionEvent)>> = BTreeMap::new();
            for e in nested {
                branches.entry(e.0[depth + 1]).or_default().push(e);
            }
            let longest = branches.values().map(|b| stages_cost(b, depth + 2)).max().unwrap_or(0);
            own.max(longest)
        })
        .sum()
}

/// `t_c * (1 - s_m)` in exact decimal arithmetic, rounded half-even.
pub fn normalize_critical_path(t_c: u64, s_m: f64) -> Result<u64> {
    if !(0.0..1.0).contains(&s_m) {
        return Err(MetricsError::DomainError(s_m));
    }
    // Shortest round-trip decimal of the share: 0.2 is taken as exactly 0.2.
    let share: Decimal = s_m.to_string().parse().map_err(|_| MetricsError::DomainError(s_m))?;
    let value = Decimal::from(t_c) * (Decimal::ONE - share);
    let rounded = value.round_dp_with_strategy(0, RoundingStrategy::MidpointNearestEven);
    Ok(rounded.to_u64().expect("non-negative product fits"))
}

/// Step function of the number of containers running a function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingProfile {
    /// `(time_us, active)` at every change, starting at the first event.
    pub points: Vec<(u64, usize)>,
}

impl ScalingProfile {
    pub fn max(&self) -> usize {
        self.points.iter().map(|p| p.1).max().unwrap_or(0)
    }

    /// Area under the curve in container-microseconds.
    pub fn area(&self) -> u128 {
        self.points.windows(2).map(|w| (w[1].0 - w[0].0) as u128 * w[0].1 as u128).sum()
    }

    /// Values of strict local maxima (plateaus count once).
    pub fn local_maxima(&self) -> Vec<usize> {
        let v: Vec<usize> = self.points.iter().map(|p| p.1).collect();
        let mut out = Vec::new();
        for i in 0..v.len() {
            let before = if i == 0 { 0 } else { v[i - 1] };
            let after = v.get(i + 1).copied().unwrap_or(0);
            if v[i] > before && v[i] > after {
                out.push(v[i]);
            }
        }
        out
    }
}

/// Events are half-open `[start, end)`, so a container handed over at one
/// instant is not double counted.
pub fn scaling_profile(traces: &[ExecutionTrace]) -> ScalingProfile {
    let mut deltas: BTreeMap<u64, i64> = BTreeMap::new();
    for e in traces.iter().flat_map(|t| &t.events) {
        if e.end_us > e.start_us {
            *deltas.entry(e.start_us).or_default() += 1;
            *deltas.entry(e.end_us).or_default() -= 1;
        }
    }
    let mut points = Vec::new();
    let mut active = 0i64;
    for (t, d) in deltas {
        active += d;
        if points.last().is_none_or(|&(_, a)| a != active as usize) {
            points.push((t, active as usize));
        }
    }
    ScalingProfile { points }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColdStats {
    pub cold: usize,
    pub total: usize,
}

impl ColdStats {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.cold as f64 / self.total as f64
        }
    }
}

/// Cold events over all events, per platform model.
pub fn cold_start_stats(traces: &[ExecutionTrace]) -> BTreeMap<String, ColdStats> {
    let mut out: BTreeMap<String, ColdStats> = BTreeMap::new();
    for t in traces {
        let s = out.entry(t.model.clone()).or_default();
        s.total += t.events.len();
        s.cold += t.events.iter().filter(|e| e.cold).count();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianInterval {
    pub low: f64,
    pub high: f64,
    /// 1-based order-statistic ranks of `low` and `high`.
    pub ranks: (usize, usize),
    pub coverage: f64,
}

/// Distribution-free interval `[x(k), x(n+1-k)]` for the median with the
/// narrowest symmetric ranks whose binomial coverage reaches `confidence`.
pub fn median_ci(samples: &[f64], confidence: f64) -> Result<MedianInterval> {
    const MIN: usize = 6;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(MetricsError::BadConfidence(confidence));
    }
    let n = samples.len();
    if n < MIN {
        return Err(MetricsError::TooFewSamples { needed: MIN, got: n });
    }
    let total = BigUint::one() << n;
    // coverage(k) = 1 - 2 * P(B <= k-1), B ~ Binomial(n, 1/2).
    let coverage = |tail: &BigUint| -> f64 {
        let inside = &total - tail * 2u32;
        ratio(&inside, &total)
    };
    let mut best = None;
    let mut tail = BigUint::zero();
    let mut binom = BigUint::one();
    for k in 1..=n / 2 {
        // tail = sum_{i < k} C(n, i)
        tail += &binom;
        binom = binom * (n - (k - 1)) / k;
        let c = coverage(&tail);
        if c >= confidence {
            best = Some((k, c));
        } else {
            break;
        }
    }
    let (k, coverage) = best.ok_or(MetricsError::TooFewSamples { needed: n + 1, got: n })?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(MedianInterval { low: sorted[k - 1], high: sorted[n - k], ranks: (k, n + 1 - k), coverage })
}

fn ratio(a: &BigUint, b: &BigUint) -> f64 {
    // Scale to keep 60 significant bits before converting.
    let shift = b.bits().saturating_sub(60);
    let (a, b) = (a >> shift, b >> shift);
    a.to_f64().unwrap_or(f64::NAN) / b.to_f64().unwrap_or(f64::NAN)
}

/// Nearest-rank percentile of unsorted samples.
pub fn percentile(samples: &[u64], p: f64) -> Option<u64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[cfg(test)]
mod tests;
