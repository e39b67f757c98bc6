//! Forecast-error metrics and the outlier-trimmed aggregate used in the
//! result tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{population_mean, population_std};

/// Which per-series error formula a report uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricConvention {
    /// Conventional root mean squared error (default).
    Rmse,
    /// The literal printed formula, which reduces to mean absolute error.
    StrictPaper,
}

impl MetricConvention {
    pub fn name(&self) -> &'static str {
        match self {
            MetricConvention::Rmse => "rmse",
            MetricConvention::StrictPaper => "strict_paper_mae",
        }
    }
}

/// Per-series forecast error under the chosen convention.
pub fn rmse(truth: &[f64], pred: &[f64], convention: MetricConvention) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::invalid(format!(
            "rmse needs equal non-zero lengths, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    let n = truth.len() as f64;
    Ok(match convention {
        MetricConvention::Rmse => (truth
            .iter()
            .zip(pred)
            .map(|(t, p)| (t - p).powi(2))
            .sum::<f64>()
            / n)
            .sqrt(),
        MetricConvention::StrictPaper => {
            truth.iter().zip(pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / n
        }
    })
}

/// Arithmetic mean of per-series errors.
pub fn mrmse(per_series: &[f64]) -> Result<f64> {
    if per_series.is_empty() {
        return Err(Error::invalid("mrmse over an empty list"));
    }
    Ok(population_mean(per_series))
}

/// Drop entries outside `mean +/- 2 std` (inclusive bounds kept) and
/// recompute; one pass only. Returns the trimmed mean, the trimmed
/// population std, and how many entries were removed.
pub fn trim_outliers(per_series: &[f64]) -> Result<(f64, f64, usize)> {
    if per_series.len() < 2 {
        return Err(Error::invalid("outlier trimming needs at least 2 entries"));
    }
    let mean = population_mean(per_series);
    let std = population_std(per_series);
    let lo = mean - 2.0 * std;
    let hi = mean + 2.0 * std;
    let kept: Vec<f64> = per_series
        .iter()
        .copied()
        .filter(|v| *v >= lo && *v <= hi)
        .collect();
    if kept.is_empty() {
        return Err(Error::Internal(
            "2-sigma trimming removed every entry".into(),
        ));
    }
    let removed = per_series.len() - kept.len();
    Ok((population_mean(&kept), population_std(&kept), removed))
}

/// Aggregated forecast errors over a set of evaluated series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub convention: MetricConvention,
    pub per_series: Vec<f64>,
    pub mrmse: f64,
    pub trimmed_mrmse: f64,
    pub trimmed_std: f64,
    pub removed_count: usize,
}

impl EvalReport {
    pub fn from_errors(per_series: Vec<f64>, convention: MetricConvention) -> Result<Self> {
        let mean = mrmse(&per_series)?;
        let (trimmed_mrmse, trimmed_std, removed_count) = if per_series.len() >= 2 {
            trim_outliers(&per_series)?
        } else {
            (mean, 0.0, 0)
        };
        Ok(EvalReport {
            convention,
            per_series,
            mrmse: mean,
            trimmed_mrmse,
            trimmed_std,
            removed_count,
        })
    }

    /// Table cell in the `mean±std` layout.
    pub fn cell(&self) -> String {
        format!("{:.3}±{:.3}", self.trimmed_mrmse, self.trimmed_std)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("report serialization failed: {e}")))
    }
}
