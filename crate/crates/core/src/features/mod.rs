//! Feature extraction: wavelet-packet energy descriptors (DWE, LWE, WCC),
//! time-domain statistical descriptors, fixed-order concatenation, and PCA
//! reduction for clustering.

mod pca;
mod stats;

pub use pca::{pca_fit, pca_transform, PcaModel};
pub use stats::{
    hurst_k, sample_entropy, sample_entropy_or_cap, skewness, stl_degrees, template_match_counts,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;
use crate::wavelet::{self, WaveletKind, WaveletSpec, WaveletTree};

/// Floor applied to energies before the logarithm in [`lwe`].
pub const LWE_EPS: f64 = 1e-12;

/// One series' descriptors. Concatenation order is fixed:
/// `[wcc | lwe | dwe | s_deg | t_deg | skewness | sample_entropy | hurst_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dwe: Vec<f64>,
    pub lwe: Vec<f64>,
    pub wcc: Vec<f64>,
    pub s_deg: f64,
    pub t_deg: f64,
    pub skewness: f64,
    pub sample_entropy: f64,
    pub hurst_k: f64,
    /// PCA projection, populated by matrix assembly when enabled.
    pub reduced: Option<Vec<f64>>,
}

impl FeatureVector {
    /// Wavelet descriptor block in concatenation order.
    pub fn wavelet_block(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.wcc.len() + self.lwe.len() + self.dwe.len());
        out.extend_from_slice(&self.wcc);
        out.extend_from_slice(&self.lwe);
        out.extend_from_slice(&self.dwe);
        out
    }

    pub fn stat_block(&self) -> [f64; 5] {
        [
            self.s_deg,
            self.t_deg,
            self.skewness,
            self.sample_entropy,
            self.hurst_k,
        ]
    }

    /// Full concatenated vector in the documented order.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = self.wavelet_block();
        out.extend_from_slice(&self.stat_block());
        out
    }

    /// Column names matching [`FeatureVector::concat`].
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.wcc.len() {
            names.push(format!("wcc_{i}"));
        }
        for i in 0..self.lwe.len() {
            names.push(format!("lwe_{i}"));
        }
        for i in 0..self.dwe.len() {
            names.push(format!("dwe_{i}"));
        }
        for n in ["s_deg", "t_deg", "skewness", "sample_entropy", "hurst_k"] {
            names.push(n.to_string());
        }
        names
    }
}

/// What PCA is applied to during matrix assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaMode {
    /// Reduce the wavelet block, append z-scored statistical descriptors.
    WaveletBlock,
    /// Reduce the whole concatenated vector.
    WholeVector,
    /// No reduction; z-scored concatenation.
    Off,
}

/// Feature-extraction configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub wavelet: WaveletKind,
    /// Cap on the wavelet-packet depth; the effective level is
    /// `min(level_cap, max_level(len, filter_len))`.
    pub level_cap: usize,
    /// Period of the seasonal decomposition (samples per cycle).
    pub stl_period: usize,
    pub entropy_m: usize,
    /// Entropy tolerance as a multiple of the population std.
    pub entropy_r_factor: f64,
    /// Use the literal printed entropy ratio (non-positive) instead of the
    /// standard orientation.
    pub strict_entropy: bool,
    pub pca: PcaMode,
    pub pca_target_variance: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            wavelet: WaveletKind::Db4,
            level_cap: 5,
            stl_period: 24,
            entropy_m: 2,
            entropy_r_factor: 0.2,
            strict_entropy: false,
            pca: PcaMode::WaveletBlock,
            pca_target_variance: 0.95,
        }
    }
}

/// Normalized per-leaf energies of the deepest wavelet-packet level. The
/// entries are non-negative and sum to one.
pub fn dwe(tree: &WaveletTree) -> Result<Vec<f64>> {
    if tree.total_energy <= 0.0 {
        return Err(Error::degenerate(
            "zero-energy input has no wavelet energy distribution",
        ));
    }
    Ok(tree
        .leaf_energies()
        .iter()
        .map(|e| e / tree.total_energy)
        .collect())
}

/// Elementwise `log10` of the energy distribution, floored at [`LWE_EPS`].
pub fn lwe(dwe: &[f64]) -> Vec<f64> {
    dwe.iter().map(|e| e.max(LWE_EPS).log10()).collect()
}

/// Orthonormal DCT-II of the log-energy vector (wavelet cepstral
/// coefficients). Preserves the Euclidean norm.
pub fn wcc(lwe: &[f64]) -> Vec<f64> {
    let n = lwe.len();
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / nf).sqrt()
            } else {
                (2.0 / nf).sqrt()
            };
            scale
                * lwe
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        x * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * nf))
                            .cos()
                    })
                    .sum::<f64>()
        })
        .collect()
}

/// Effective packet depth for a series of length `len`: the configured cap,
/// limited by the edge-effect bound; 0 when the series is shorter than the
/// filter.
pub fn effective_level(len: usize, config: &FeatureConfig) -> usize {
    let spec = WaveletSpec::new(config.wavelet);
    match wavelet::max_level(len, spec.filter_len()) {
        Ok(bound) => config.level_cap.min(bound),
        Err(_) => 0,
    }
}

/// Run the full descriptor workflow on one series.
///
/// Wavelet descriptors come from a packet transform at the effective level;
/// a series too short to decompose contributes the trivial single-leaf
/// distribution. Degenerate statistical cases follow the documented
/// conventions (zero skew/entropy/hurst for constant input); an undefined
/// entropy count falls back to the smoothed estimate.
pub fn extract_features(series: &Series, config: &FeatureConfig) -> Result<FeatureVector> {
    let level = effective_level(series.len(), config);
    let dwe_vec = if level == 0 {
        let energy: f64 = series.values.iter().map(|v| v * v).sum();
        if energy <= 0.0 {
            return Err(Error::degenerate(
                "zero-energy series has no wavelet energy distribution",
            ));
        }
        vec![1.0]
    } else {
        let spec = WaveletSpec::new(config.wavelet);
        dwe(&wavelet::dwpt(series, level, &spec)?)?
    };
    let lwe_vec = lwe(&dwe_vec);
    let wcc_vec = wcc(&lwe_vec);
    let (s_deg, t_deg) = stl_degrees(series, config.stl_period)?;
    let skew = skewness(series)?;
    let entropy = sample_entropy_or_cap(series, config.entropy_m, None, config.strict_entropy);
    let hurst = hurst_k(series)?;
    Ok(FeatureVector {
        dwe: dwe_vec,
        lwe: lwe_vec,
        wcc: wcc_vec,
        s_deg,
        t_deg,
        skewness: skew,
        sample_entropy: entropy,
        hurst_k: hurst,
        reduced: None,
    })
}

fn zscore_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    if n == 0 {
        return Vec::new();
    }
    let dims = rows[0].len();
    let mut mean = vec![0.0; dims];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut std = vec![0.0; dims];
    for r in rows {
        for d in 0..dims {
            std[d] += (r[d] - mean[d]).powi(2);
        }
    }
    for s in &mut std {
        *s = (*s / n as f64).sqrt();
    }
    rows.iter()
        .map(|r| {
            (0..dims)
                .map(|d| {
                    if std[d] > 1e-12 {
                        (r[d] - mean[d]) / std[d]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Assemble the clustering matrix from a population of feature vectors,
/// applying the configured PCA mode. Also records each sample's projection
/// in `reduced` when PCA runs.
pub fn assemble_matrix(
    features: &mut [FeatureVector],
    config: &FeatureConfig,
) -> Result<(Vec<Vec<f64>>, Option<PcaModel>)> {
    if features.is_empty() {
        return Err(Error::invalid("cannot assemble an empty feature matrix"));
    }
    match config.pca {
        PcaMode::Off => {
            let rows: Vec<Vec<f64>> = features.iter().map(|f| f.concat()).collect();
            Ok((zscore_columns(&rows), None))
        }
        PcaMode::WholeVector => {
            let rows: Vec<Vec<f64>> = features.iter().map(|f| f.concat()).collect();
            let model = pca_fit(&rows, config.pca_target_variance)?;
            let mut out = Vec::with_capacity(rows.len());
            for (f, row) in features.iter_mut().zip(&rows) {
                let reduced = pca_transform(&model, row)?;
                f.reduced = Some(reduced.clone());
                out.push(reduced);
            }
            Ok((out, Some(model)))
        }
        PcaMode::WaveletBlock => {
            let blocks: Vec<Vec<f64>> = features.iter().map(|f| f.wavelet_block()).collect();
            let model = pca_fit(&blocks, config.pca_target_variance)?;
            let stats: Vec<Vec<f64>> = features.iter().map(|f| f.stat_block().to_vec()).collect();
            let stats_z = zscore_columns(&stats);
            let mut out = Vec::with_capacity(blocks.len());
            for ((f, block), stat_row) in features.iter_mut().zip(&blocks).zip(&stats_z) {
                let reduced = pca_transform(&model, block)?;
                f.reduced = Some(reduced.clone());
                let mut row = reduced;
                row.extend_from_slice(stat_row);
                out.push(row);
            }
            Ok((out, Some(model)))
        }
    }
}

/// Write one CSV row per series: `user_id` followed by the concatenated
/// feature columns.
pub fn write_features_csv<W: std::io::Write>(
    writer: W,
    ids: &[String],
    features: &[FeatureVector],
) -> Result<()> {
    if ids.len() != features.len() {
        return Err(Error::invalid("ids and features differ in length"));
    }
    let mut w = csv::Writer::from_writer(writer);
    if let Some(first) = features.first() {
        let mut header = vec!["user_id".to_string()];
        header.extend(first.column_names());
        w.write_record(&header).map_err(csv_err)?;
        for (id, f) in ids.iter().zip(features) {
            let mut record = vec![id.clone()];
            record.extend(f.concat().iter().map(|v| v.to_string()));
            w.write_record(&record).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv write failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(values: Vec<f64>) -> Series {
        Series::from_values("u0", values).unwrap()
    }

    fn haar_tree(values: Vec<f64>, level: usize) -> WaveletTree {
        let spec = WaveletSpec::new(WaveletKind::Haar);
        wavelet::dwpt(&series(values), level, &spec).unwrap()
    }

    #[test]
    fn dwe_haar_examples() {
        let d = dwe(&haar_tree(vec![1.0, 1.0, 1.0, 1.0], 1)).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-10);
        assert!(d[1].abs() < 1e-10);
        let d = dwe(&haar_tree(vec![1.0, -1.0, 1.0, -1.0], 1)).unwrap();
        assert!(d[0].abs() < 1e-10);
        assert!((d[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dwe_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let x: Vec<f64> = (0..64).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d = dwe(&haar_tree(x, 3)).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            assert!(d.iter().all(|e| *e >= 0.0));
        }
    }

    #[test]
    fn dwe_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-2.0..2.0)).collect();
        let scaled: Vec<f64> = x.iter().map(|v| -7.5 * v).collect();
        let a = dwe(&haar_tree(x, 3)).unwrap();
        let b = dwe(&haar_tree(scaled, 3)).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn lwe_examples() {
        assert_eq!(lwe(&[1.0]), vec![0.0]);
        let out = lwe(&[0.1, 0.9]);
        assert!((out[0] + 1.0).abs() < 1e-3);
        assert!((out[1] + 0.0458).abs() < 1e-3);
        assert_eq!(lwe(&[0.0]), vec![-12.0]);
    }

    #[test]
    fn wcc_constant_and_norm() {
        let n = 8;
        let c = 2.5;
        let out = wcc(&vec![c; n]);
        assert!((out[0] - c * (n as f64).sqrt()).abs() < 1e-10);
        for v in &out[1..] {
            assert!(v.abs() < 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = wcc(&x);
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((nx - ny).abs() < 1e-10);
        assert_eq!(wcc(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn extract_constant_series_uses_degenerate_conventions() {
        let f = extract_features(&series(vec![2.0; 40]), &FeatureConfig::default()).unwrap();
        assert_eq!(f.skewness, 0.0);
        assert_eq!(f.sample_entropy, 0.0);
        assert_eq!(f.hurst_k, 0.0);
        assert!((f.dwe.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn extract_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x: Vec<f64> = (0..96).map(|_| rng.random_range(0.0..2.0)).collect();
        let config = FeatureConfig::default();
        let a = extract_features(&series(x.clone()), &config).unwrap();
        let b = extract_features(&series(x), &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_more_entropic_than_sinusoid() {
        let config = FeatureConfig {
            stl_period: 12,
            ..FeatureConfig::default()
        };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sin: Vec<f64> = (0..96)
                .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 12.0).sin())
                .collect();
            let noise: Vec<f64> = (0..96).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fs = extract_features(&series(sin), &config).unwrap();
            let fn_ = extract_features(&series(noise), &config).unwrap();
            assert!(
                fn_.sample_entropy > fs.sample_entropy,
                "seed {seed}: noise {} vs sin {}",
                fn_.sample_entropy,
                fs.sample_entropy
            );
        }
    }

    #[test]
    fn short_series_degrades_to_trivial_wavelet_block() {
        let f = extract_features(
            &series(vec![1.0, 2.0, 0.5, 1.5, 0.7, 1.9]),
            &FeatureConfig::default(),
        )
        .unwrap();
        assert_eq!(f.dwe, vec![1.0]);
    }

    #[test]
    fn assemble_matrix_shapes_and_reduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let config = FeatureConfig {
            stl_period: 8,
            ..FeatureConfig::default()
        };
        let mut features: Vec<FeatureVector> = (0..12)
            .map(|_| {
                let x: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
                extract_features(&series(x), &config).unwrap()
            })
            .collect();
        let (matrix, model) = assemble_matrix(&mut features, &config).unwrap();
        let model = model.unwrap();
        assert_eq!(matrix.len(), 12);
        let expect_cols = model.components.len() + 5;
        assert!(matrix.iter().all(|r| r.len() == expect_cols));
        assert!(features.iter().all(|f| f.reduced.is_some()));
    }

    #[test]
    fn features_csv_has_header_and_rows() {
        let config = FeatureConfig::default();
        let f = extract_features(&series((0..40).map(|i| (i as f64).sin()).collect()), &config)
            .unwrap();
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &["alice".to_string()], &[f]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("user_id,wcc_0"));
        assert!(header.ends_with("hurst_k"));
        assert!(lines.next().unwrap().starts_with("alice,"));
    }
}
