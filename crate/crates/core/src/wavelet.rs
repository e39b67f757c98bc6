//! Discrete wavelet transform, wavelet packet transform, threshold denoising,
//! and reconstruction.
//!
//! Filtering uses periodic boundary extension. A node of odd length is
//! zero-padded by one sample before splitting so every split stage is an
//! orthogonal map: coefficient energy equals input energy exactly, and the
//! inverse transform (adjoint filters plus length tracking) reproduces the
//! input to machine precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;

/// Supported orthonormal wavelet families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Haar,
    Db2,
    Db4,
}

/// An orthonormal analysis filter pair.
#[derive(Debug, Clone)]
pub struct WaveletSpec {
    pub kind: WaveletKind,
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl WaveletSpec {
    pub fn new(kind: WaveletKind) -> Self {
        let lowpass = match kind {
            WaveletKind::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletKind::Db2 => {
                let s3 = 3.0_f64.sqrt();
                let norm = 4.0 * 2.0_f64.sqrt();
                vec![
                    (1.0 + s3) / norm,
                    (3.0 + s3) / norm,
                    (3.0 - s3) / norm,
                    (1.0 - s3) / norm,
                ]
            }
            WaveletKind::Db4 => vec![
                0.230_377_813_308_855_23,
                0.714_846_570_552_541_5,
                0.630_880_767_929_590_4,
                -0.027_983_769_416_983_85,
                -0.187_034_811_718_881_14,
                0.030_841_381_835_986_965,
                0.032_883_011_666_982_945,
                -0.010_597_401_784_997_278,
            ],
        };
        // Quadrature mirror: alternating-sign reversal of the lowpass.
        let n = lowpass.len();
        let highpass = (0..n)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[n - 1 - k]
            })
            .collect();
        WaveletSpec {
            kind,
            lowpass,
            highpass,
        }
    }

    pub fn filter_len(&self) -> usize {
        self.lowpass.len()
    }
}

/// Full wavelet-packet decomposition: a balanced binary tree of coefficient
/// sets; level `j` holds `2^j` nodes in natural (binary) order, so node `i`
/// at level `j` splits into nodes `2i` (low) and `2i+1` (high) at `j+1`.
#[derive(Debug, Clone)]
pub struct WaveletTree {
    pub levels: Vec<Vec<Vec<f64>>>,
    pub input_len: usize,
    /// Sum of squared coefficients over the deepest-level nodes.
    pub total_energy: f64,
}

impl WaveletTree {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Coefficient sets at the deepest level, in natural order.
    pub fn leaves(&self) -> &[Vec<f64>] {
        self.levels.last().map(|l| l.as_slice()).unwrap_or(&[])
    }

    /// Per-node energies at the deepest level.
    pub fn leaf_energies(&self) -> Vec<f64> {
        self.leaves().iter().map(|d| energy(d)).collect()
    }
}

/// Pyramid decomposition: approximation at the coarsest level plus detail
/// sets `details[0]` (finest, level 1) through `details[L-1]` (coarsest).
#[derive(Debug, Clone)]
pub struct DwtPyramid {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    pub input_len: usize,
    user_id: String,
    start_index: i64,
    granularity_minutes: u32,
}

/// Detail-coefficient shrinkage rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Shrink magnitudes by T (zero inside the dead zone). Default.
    Shrink,
    /// Classical zero-or-keep thresholding.
    HardZero,
}

/// Denoising configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiseConfig {
    pub wavelet: WaveletKind,
    pub rule: ThresholdRule,
    /// When set, used verbatim instead of the universal threshold.
    pub threshold_override: Option<f64>,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            wavelet: WaveletKind::Db4,
            rule: ThresholdRule::Shrink,
            threshold_override: None,
        }
    }
}

pub(crate) fn energy(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|c| c * c).sum()
}

/// Deepest decomposition level whose coefficients stay clear of boundary
/// corruption: `floor(log2(signal_len / filter_len))`.
pub fn max_level(signal_len: usize, filter_len: usize) -> Result<usize> {
    if filter_len == 0 {
        return Err(Error::invalid("filter length must be positive"));
    }
    if signal_len < filter_len {
        return Err(Error::invalid(format!(
            "signal of length {signal_len} is shorter than the filter ({filter_len})"
        )));
    }
    let mut level = 0usize;
    while signal_len >= filter_len << (level + 1) {
        level += 1;
    }
    Ok(level)
}

/// One analysis stage: periodic convolution with each filter, downsampled by
/// two. Odd-length inputs are zero-padded by one sample first.
fn split(signal: &[f64], spec: &WaveletSpec) -> (Vec<f64>, Vec<f64>) {
    let padded_len = signal.len() + (signal.len() % 2);
    let half = padded_len / 2;
    let flen = spec.filter_len();
    let at = |idx: usize| -> f64 {
        let i = idx % padded_len;
        if i < signal.len() {
            signal[i]
        } else {
            0.0
        }
    };
    let mut lo = vec![0.0; half];
    let mut hi = vec![0.0; half];
    for i in 0..half {
        let mut acc_lo = 0.0;
        let mut acc_hi = 0.0;
        for k in 0..flen {
            let x = at(2 * i + k);
            acc_lo += spec.lowpass[k] * x;
            acc_hi += spec.highpass[k] * x;
        }
        lo[i] = acc_lo;
        hi[i] = acc_hi;
    }
    (lo, hi)
}

/// Adjoint of [`split`]: rebuild a parent node of length `parent_len`.
fn merge(lo: &[f64], hi: &[f64], parent_len: usize, spec: &WaveletSpec) -> Result<Vec<f64>> {
    if lo.len() != hi.len() {
        return Err(Error::invalid(format!(
            "low/high coefficient sets differ in length: {} vs {}",
            lo.len(),
            hi.len()
        )));
    }
    let padded_len = 2 * lo.len();
    if parent_len != padded_len && parent_len + 1 != padded_len {
        return Err(Error::invalid(format!(
            "parent length {parent_len} inconsistent with {} coefficients per branch",
            lo.len()
        )));
    }
    let flen = spec.filter_len();
    let mut out = vec![0.0; padded_len];
    for i in 0..lo.len() {
        for k in 0..flen {
            let idx = (2 * i + k) % padded_len;
            out[idx] += lo[i] * spec.lowpass[k] + hi[i] * spec.highpass[k];
        }
    }
    out.truncate(parent_len);
    Ok(out)
}

/// Node length at each level given the input length: `ceil` halving.
fn length_chain(input_len: usize, levels: usize) -> Vec<usize> {
    let mut chain = Vec::with_capacity(levels + 1);
    chain.push(input_len);
    let mut len = input_len;
    for _ in 0..levels {
        len = len.div_ceil(2);
        chain.push(len);
    }
    chain
}

fn check_level(series_len: usize, level: usize, spec: &WaveletSpec) -> Result<()> {
    if level == 0 {
        return Err(Error::invalid("decomposition level must be >= 1"));
    }
    // Every stage must be at least one filter long (after padding) so the
    // split stays orthogonal: len >= filter_len * 2^(level-1). This admits
    // one level beyond the edge-effect bound used by `denoise`.
    let bound = max_level(series_len, spec.filter_len())? + 1;
    if level > bound {
        return Err(Error::invalid(format!(
            "level {level} exceeds the bound {bound} for length {series_len}"
        )));
    }
    if series_len < (1usize << level) {
        return Err(Error::invalid(format!(
            "series of length {series_len} too short for {level} levels"
        )));
    }
    Ok(())
}

/// Discrete wavelet packet transform: both branches of every node are split
/// recursively down to level `level`.
pub fn dwpt(series: &Series, level: usize, spec: &WaveletSpec) -> Result<WaveletTree> {
    check_level(series.len(), level, spec)?;
    let mut levels: Vec<Vec<Vec<f64>>> = Vec::with_capacity(level);
    let mut current: Vec<Vec<f64>> = vec![series.values.clone()];
    for _ in 0..level {
        let mut next = Vec::with_capacity(current.len() * 2);
        for node in &current {
            let (lo, hi) = split(node, spec);
            next.push(lo);
            next.push(hi);
        }
        levels.push(next.clone());
        current = next;
    }
    let total_energy = levels
        .last()
        .map(|nodes| nodes.iter().map(|d| energy(d)).sum())
        .unwrap_or(0.0);
    Ok(WaveletTree {
        levels,
        input_len: series.len(),
        total_energy,
    })
}

/// Inverse wavelet packet transform from the deepest level of `tree`.
pub fn idwpt(tree: &WaveletTree, spec: &WaveletSpec) -> Result<Vec<f64>> {
    let depth = tree.depth();
    if depth == 0 {
        return Err(Error::invalid("cannot invert an empty tree"));
    }
    let chain = length_chain(tree.input_len, depth);
    let mut current = tree.leaves().to_vec();
    for j in (1..=depth).rev() {
        let parent_len = chain[j - 1];
        let mut parents = Vec::with_capacity(current.len() / 2);
        for pair in current.chunks(2) {
            parents.push(merge(&pair[0], &pair[1], parent_len, spec)?);
        }
        current = parents;
    }
    Ok(current.into_iter().next().unwrap())
}

/// Pyramid transform: only the approximation branch is split recursively.
pub fn dwt(series: &Series, level: usize, spec: &WaveletSpec) -> Result<DwtPyramid> {
    check_level(series.len(), level, spec)?;
    let mut approx = series.values.clone();
    let mut details = Vec::with_capacity(level);
    for _ in 0..level {
        let (lo, hi) = split(&approx, spec);
        details.push(hi);
        approx = lo;
    }
    Ok(DwtPyramid {
        approx,
        details,
        input_len: series.len(),
        user_id: series.user_id.clone(),
        start_index: series.start_index,
        granularity_minutes: series.granularity_minutes,
    })
}

/// Inverse pyramid transform; reproduces the analyzed series exactly when no
/// thresholding was applied.
pub fn idwt(pyramid: &DwtPyramid, spec: &WaveletSpec) -> Result<Series> {
    let levels = pyramid.details.len();
    let chain = length_chain(pyramid.input_len, levels);
    let mut approx = pyramid.approx.clone();
    for j in (1..=levels).rev() {
        approx = merge(&approx, &pyramid.details[j - 1], chain[j - 1], spec)?;
    }
    Series::new(
        pyramid.user_id.clone(),
        pyramid.start_index,
        pyramid.granularity_minutes,
        approx,
    )
}

/// Apply the shrinkage rule elementwise with threshold `T`.
pub fn threshold(coeffs: &[f64], t: f64, rule: ThresholdRule) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::invalid("threshold must be non-negative"));
    }
    let out = coeffs
        .iter()
        .map(|&x| match rule {
            ThresholdRule::Shrink => {
                if x > t {
                    x - t
                } else if x < -t {
                    x + t
                } else {
                    0.0
                }
            }
            ThresholdRule::HardZero => {
                if x.abs() <= t {
                    0.0
                } else {
                    x
                }
            }
        })
        .collect();
    Ok(out)
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Universal threshold `sigma * sqrt(2 ln n)` with the MAD noise estimate
/// `sigma = median(|d1|) / 0.6745` taken from the finest detail set.
pub fn universal_threshold(finest_detail: &[f64], n: usize) -> f64 {
    let abs: Vec<f64> = finest_detail.iter().map(|d| d.abs()).collect();
    let sigma = median(&abs) / 0.6745;
    sigma * (2.0 * (n as f64).ln()).sqrt()
}

/// Wavelet denoising: pyramid transform to the edge-effect bound, shrink all
/// detail sets, reconstruct. Output length equals input length. A series too
/// short to decompose even once is returned unchanged.
pub fn denoise(series: &Series, config: &DenoiseConfig) -> Result<Series> {
    let spec = WaveletSpec::new(config.wavelet);
    let level = max_level(series.len(), spec.filter_len())?;
    if level == 0 {
        return Ok(series.clone());
    }
    let mut pyramid = dwt(series, level, &spec)?;
    let t = config
        .threshold_override
        .unwrap_or_else(|| universal_threshold(&pyramid.details[0], series.len()));
    for detail in &mut pyramid.details {
        *detail = threshold(detail, t, config.rule)?;
    }
    idwt(&pyramid, &spec)
}
