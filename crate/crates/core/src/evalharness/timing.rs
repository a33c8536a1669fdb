use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genpipe::GenerationRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub records: usize,
    pub failed: usize,
    pub tests: usize,
    pub wall_ms: f64,
    /// Absent when the ledger spans zero wall time.
    pub tests_per_hour: Option<f64>,
    pub stages: BTreeMap<String, LatencyStats>,
    /// Sum of the stage timings per record.
    pub total: LatencyStats,
}

/// Linear interpolation between closest ranks over sorted data, so the
/// median of an even-length sample is the mean of the middle pair.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

fn stats(mut values: Vec<f64>) -> LatencyStats {
    values.sort_by(f64::total_cmp);
    let count = values.len();
    LatencyStats {
        count,
        mean_ms: if count == 0 { 0.0 } else { values.iter().sum::<f64>() / count as f64 },
        p50_ms: percentile(&values, 0.5),
        p95_ms: percentile(&values, 0.95),
    }
}

/// Per-stage latency and throughput. Wall time is the span from the first
/// record's start to the last record's end, so concurrent workers are not
/// double counted.
pub fn measure_timing(records: &[GenerationRecord]) -> Result<TimingReport> {
    if records.is_empty() {
        return Err(Error::EmptyReportSet);
    }
    let mut per_stage: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in records {
        for (stage, ms) in &rec.timings {
            per_stage.entry(stage.clone()).or_default().push(*ms);
        }
    }
    let start = records.iter().map(|r| r.wall_start_ms).fold(f64::INFINITY, f64::min);
    let end = records.iter().map(|r| r.wall_end_ms).fold(f64::NEG_INFINITY, f64::max);
    let wall_ms = (end - start).max(0.0);
    let tests: usize = records.iter().map(|r| r.saved_tests().count()).sum();
    Ok(TimingReport {
        records: records.len(),
        failed: records.iter().filter(|r| r.failed).count(),
        tests,
        wall_ms,
        tests_per_hour: (wall_ms > 0.0).then(|| tests as f64 * 3_600_000.0 / wall_ms),
        stages: per_stage.into_iter().map(|(k, v)| (k, stats(v))).collect(),
        total: stats(records.iter().map(|r| r.timings.values().sum()).collect()),
    })
}
