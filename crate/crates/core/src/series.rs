//! Canonical load-series representation, resampling, standardization, and
//! few-shot train/test splitting.
//!
//! Time is a sample index plus a granularity; alignment across users is by
//! index, not wall-clock timestamps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forecast horizon used for few-shot evaluation.
pub const HORIZON: usize = 72;

/// A single user's load sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub user_id: String,
    /// Sample offset from the dataset epoch.
    pub start_index: i64,
    /// Minutes per sample; must be positive.
    pub granularity_minutes: u32,
    pub values: Vec<f64>,
}

/// A k-shot training window plus the 72-step test window that follows it.
#[derive(Debug, Clone)]
pub struct FewShotSplit {
    pub train: Series,
    pub test: Series,
}

impl Series {
    /// Build a series, validating the type invariants.
    pub fn new(
        user_id: impl Into<String>,
        start_index: i64,
        granularity_minutes: u32,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("series must be non-empty"));
        }
        if granularity_minutes == 0 {
            return Err(Error::invalid("granularity_minutes must be positive"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "series value at index {i} is not finite"
            )));
        }
        Ok(Series {
            user_id: user_id.into(),
            start_index,
            granularity_minutes,
            values,
        })
    }

    /// Convenience constructor for tests and synthetic data.
    pub fn from_values(user_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Series::new(user_id, 0, 1, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population (divide-by-N) standard deviation.
    pub fn std(&self) -> f64 {
        population_std(&self.values)
    }
}

pub(crate) fn population_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    let mean = population_mean(values);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

/// Downsample by averaging over consecutive buckets of `k` samples.
///
/// Output index `m` is the mean of input samples `m*k ..= m*k+k-1`; trailing
/// samples that do not fill a bucket are dropped. Granularity is multiplied
/// by `k`.
pub fn resample(series: &Series, k: usize) -> Result<Series> {
    if k == 0 {
        return Err(Error::invalid("resample factor k must be >= 1"));
    }
    if series.len() < k {
        return Err(Error::invalid(format!(
            "series of length {} cannot be resampled by {k}",
            series.len()
        )));
    }
    let buckets = series.len() / k;
    let values: Vec<f64> = (0..buckets)
        .map(|m| series.values[m * k..(m + 1) * k].iter().sum::<f64>() / k as f64)
        .collect();
    Ok(Series {
        user_id: series.user_id.clone(),
        start_index: series.start_index / k as i64,
        granularity_minutes: series.granularity_minutes * k as u32,
        values,
    })
}

/// Shift and scale to zero mean and unit population standard deviation.
pub fn standardize(series: &Series) -> Result<Series> {
    if series.len() < 2 {
        return Err(Error::invalid("standardize needs at least 2 samples"));
    }
    let mean = series.mean();
    let std = series.std();
    if std <= 0.0 {
        return Err(Error::degenerate(
            "cannot standardize a zero-variance series",
        ));
    }
    let values = series.values.iter().map(|v| (v - mean) / std).collect();
    Ok(Series {
        user_id: series.user_id.clone(),
        start_index: series.start_index,
        granularity_minutes: series.granularity_minutes,
        values,
    })
}

/// Split into the first `k` samples (train) and the next 72 (test).
pub fn split_few_shot(series: &Series, k: usize) -> Result<FewShotSplit> {
    if k == 0 {
        return Err(Error::invalid("shot count k must be >= 1"));
    }
    let needed = k + HORIZON;
    if series.len() < needed {
        return Err(Error::invalid(format!(
            "few-shot split needs at least {needed} samples ({}-shot + {HORIZON} test), got {}",
            k,
            series.len()
        )));
    }
    Ok(FewShotSplit {
        train: slice_window(series, 0, k)?,
        test: slice_window(series, k, HORIZON)?,
    })
}

/// Contiguous subsequence `[start, start+length)` with the time anchor advanced.
pub fn slice_window(series: &Series, start: usize, length: usize) -> Result<Series> {
    if length == 0 {
        return Err(Error::invalid("window length must be >= 1"));
    }
    let end = start
        .checked_add(length)
        .ok_or_else(|| Error::invalid("window overflows"))?;
    if end > series.len() {
        return Err(Error::invalid(format!(
            "window [{start}, {end}) out of range for series of length {}",
            series.len()
        )));
    }
    Ok(Series {
        user_id: series.user_id.clone(),
        start_index: series.start_index + start as i64,
        granularity_minutes: series.granularity_minutes,
        values: series.values[start..end].to_vec(),
    })
}
