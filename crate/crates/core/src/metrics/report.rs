use serde::{Deserialize, Serialize};

use super::{cold_start_stats, critical_path, median_ci, percentile, MedianInterval, Result, ScalingProfile};
use crate::sim::ExecutionTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p5: u64,
    pub p25: u64,
    pub p50: u64,
    pub p75: u64,
    pub p95: u64,
}

impl Percentiles {
    pub fn of(samples: &[u64]) -> Option<Percentiles> {
        Some(Percentiles {
            p5: percentile(samples, 5.0)?,
            p25: percentile(samples, 25.0)?,
            p50: percentile(samples, 50.0)?,
            p75: percentile(samples, 75.0)?,
            p95: percentile(samples, 95.0)?,
        })
    }
}

/// Summary of all runs of one benchmark under one platform model. Times are
/// microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub benchmark: String,
    pub model: String,
    pub runs: usize,
    pub total: Percentiles,
    pub t_c: u64,
    pub t_o: u64,
    pub cold_fraction: f64,
    /// 95% interval of the median end-to-end runtime; absent below six runs.
    pub median_ci: Option<MedianInterval>,
}

impl BenchmarkReport {
    /// `traces` must be non-empty and come from one model. `t_c` and `t_o`
    /// are medians over runs.
    pub fn from_traces(benchmark: &str, traces: &[ExecutionTrace]) -> Result<BenchmarkReport> {
        let totals: Vec<u64> = traces.iter().map(ExecutionTrace::total_runtime_us).collect();
        let total = Percentiles::of(&totals).ok_or(super::MetricsError::EmptyTrace)?;
        let decompositions = traces.iter().map(critical_path).collect::<Result<Vec<_>>>()?;
        let t_c: Vec<u64> = decompositions.iter().map(|d| d.t_c).collect();
        let t_o: Vec<u64> = decompositions.iter().map(|d| d.t_o).collect();
        let samples: Vec<f64> = totals.iter().map(|&t| t as f64).collect();
        let cold = cold_start_stats(traces);
        Ok(BenchmarkReport {
            benchmark: benchmark.to_owned(),
            model: traces[0].model.clone(),
            runs: traces.len(),
            total,
            t_c: percentile(&t_c, 50.0).unwrap_or(0),
            t_o: percentile(&t_o, 50.0).unwrap_or(0),
            cold_fraction: cold.values().next().map_or(0.0, |c| c.fraction()),
            median_ci: median_ci(&samples, 0.95).ok(),
        })
    }
}

fn ms(us: u64) -> String {
    format!("{:.3}", us as f64 / 1_000.0)
}

fn finish(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// Runtime box data: one row per benchmark and model.
pub fn runtime_csv(reports: &[BenchmarkReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "benchmark",
        "model",
        "runs",
        "p5_ms",
        "p25_ms",
        "p50_ms",
        "p75_ms",
        "p95_ms",
        "ci_low_ms",
        "ci_high_ms",
    ])
    .expect("in-memory write");
    for r in reports {
        let (lo, hi) = r.median_ci.map_or((String::new(), String::new()), |c| (ms(c.low as u64), ms(c.high as u64)));
        let t = r.total;
        w.write_record([
            r.benchmark.clone(),
            r.model.clone(),
            r.runs.to_string(),
            ms(t.p5),
            ms(t.p25),
            ms(t.p50),
            ms(t.p75),
            ms(t.p95),
            lo,
            hi,
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Critical path and overhead bars.
pub fn decomposition_csv(reports: &[BenchmarkReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["benchmark", "model", "t_c_ms", "t_o_ms", "cold_fraction"]).expect("in-memory write");
    for r in reports {
        w.write_record([r.benchmark.clone(), r.model.clone(), ms(r.t_c), ms(r.t_o), format!("{:.4}", r.cold_fraction)])
            .expect("in-memory write");
    }
    finish(w)
}

/// Scaling curves, one labelled series per profile.
pub fn scaling_csv(series: &[(String, ScalingProfile)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "time_ms", "containers"]).expect("in-memory write");
    for (label, profile) in series {
        for &(t, n) in &profile.points {
            w.write_record([label.clone(), ms(t), n.to_string()]).expect("in-memory write");
        }
    }
    finish(w)
}
