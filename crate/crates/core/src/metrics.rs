//! Confusion-matrix scores and latency statistics for session reports.
//!
//! Precision is tp/(tp+fp), recall is tp/(tp+fn), accuracy is (tp+tn)/total.
//! Undefined scores surface as [`MetricsError::ZeroDenominator`] naming the
//! score rather than a sentinel value, so downstream comparisons cannot be
//! silently corrupted. Percentiles use the nearest-rank method.

use crate::detector::Lighting;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{score} is undefined: denominator is zero")]
    ZeroDenominator { score: &'static str },
    #[error("no latency samples match the filter")]
    EmptySampleSet,
}

/// Binary confusion matrix over violation / no-violation frame calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tpc: u64,
    pub fpc: u64,
    pub fnc: u64,
    pub tnc: u64,
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_counts(tpc: u64, fpc: u64, fnc: u64, tnc: u64) -> Self {
        ConfusionMatrix { tpc, fpc, fnc, tnc }
    }

    pub fn total(&self) -> u64 {
        self.tpc + self.fpc + self.fnc + self.tnc
    }

    /// Increment exactly one counter for a (predicted, actual) pair.
    pub fn update(&mut self, predicted_violation: bool, actual_violation: bool) {
        match (predicted_violation, actual_violation) {
            (true, true) => self.tpc += 1,
            (true, false) => self.fpc += 1,
            (false, true) => self.fnc += 1,
            (false, false) => self.tnc += 1,
        }
    }

    pub fn scores(&self) -> Result<Scores, MetricsError> {
        let precision_den = self.tpc + self.fpc;
        if precision_den == 0 {
            return Err(MetricsError::ZeroDenominator { score: "precision" });
        }
        let recall_den = self.tpc + self.fnc;
        if recall_den == 0 {
            return Err(MetricsError::ZeroDenominator { score: "recall" });
        }
        let total = self.total();
        if total == 0 {
            return Err(MetricsError::ZeroDenominator { score: "accuracy" });
        }
        Ok(Scores {
            precision: self.tpc as f64 / precision_den as f64,
            recall: self.tpc as f64 / recall_den as f64,
            accuracy: (self.tpc + self.tnc) as f64 / total as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyKind {
    Inference,
    EndToEnd,
    Upload,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub kind: LatencyKind,
    pub value_ms: f64,
    pub lighting: Lighting,
}

/// Optional restriction of a sample set; `None` fields match everything.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LatencyFilter {
    pub kind: Option<LatencyKind>,
    pub lighting: Option<Lighting>,
}

impl LatencyFilter {
    pub fn kind(kind: LatencyKind) -> Self {
        LatencyFilter {
            kind: Some(kind),
            lighting: None,
        }
    }

    fn matches(&self, sample: &LatencySample) -> bool {
        self.kind.is_none_or(|k| k == sample.kind)
            && self.lighting.is_none_or(|l| l == sample.lighting)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub count: usize,
}

/// Mean and nearest-rank p50/p95 over the filtered samples.
pub fn latency_stats(
    samples: &[LatencySample],
    filter: LatencyFilter,
) -> Result<LatencyStats, MetricsError> {
    let mut values: Vec<f64> = samples
        .iter()
        .filter(|s| filter.matches(s))
        .map(|s| s.value_ms)
        .collect();
    if values.is_empty() {
        return Err(MetricsError::EmptySampleSet);
    }
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(LatencyStats {
        mean_ms: mean,
        p50_ms: nearest_rank(&values, 50.0),
        p95_ms: nearest_rank(&values, 95.0),
        count: values.len(),
    })
}

/// Nearest-rank percentile over an ascending-sorted non-empty slice:
/// the value at 1-indexed rank `ceil(p/100 * n)`.
fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}
