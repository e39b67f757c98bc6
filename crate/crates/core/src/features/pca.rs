//! Principal component analysis over z-scored feature vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fitted PCA: per-dimension z-scoring followed by projection onto the
/// retained principal axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    /// Per-dimension mean of the training data (original dimensionality).
    pub mean: Vec<f64>,
    /// Per-dimension population std; dimensions with zero variance are
    /// excluded from the projection.
    pub scale: Vec<f64>,
    /// Indices of the dimensions that survived the variance filter.
    pub kept_dims: Vec<usize>,
    /// Retained components, one row per component, orthonormal over the
    /// kept dimensions.
    pub components: Vec<Vec<f64>>,
    /// Explained-variance ratio of each retained component, non-increasing.
    pub explained_variance_ratio: Vec<f64>,
}

const VAR_EPS: f64 = 1e-12;

/// Fit a PCA on `vectors`, retaining the smallest number of components whose
/// cumulative explained variance reaches `target_variance`, capped at
/// `min(dims, samples - 1)`.
pub fn pca_fit(vectors: &[Vec<f64>], target_variance: f64) -> Result<PcaModel> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least 2 samples"));
    }
    let dims = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dims) {
        return Err(Error::invalid("PCA input vectors differ in length"));
    }
    if dims == 0 {
        return Err(Error::invalid("PCA input vectors are empty"));
    }

    let mut mean = vec![0.0; dims];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut scale = vec![0.0; dims];
    for v in vectors {
        for d in 0..dims {
            scale[d] += (v[d] - mean[d]).powi(2);
        }
    }
    for s in &mut scale {
        *s = (*s / n as f64).sqrt();
    }
    let kept_dims: Vec<usize> = (0..dims).filter(|&d| scale[d] > VAR_EPS).collect();
    if kept_dims.is_empty() {
        // All dimensions constant: a zero-component model; transforms are empty.
        return Ok(PcaModel {
            mean,
            scale,
            kept_dims,
            components: Vec::new(),
            explained_variance_ratio: Vec::new(),
        });
    }

    let k = kept_dims.len();
    let z = |v: &Vec<f64>| -> Vec<f64> {
        kept_dims
            .iter()
            .map(|&d| (v[d] - mean[d]) / scale[d])
            .collect()
    };
    // Sample covariance of the z-scored data.
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for v in vectors {
        let zv = z(v);
        for a in 0..k {
            for b in a..k {
                cov[(a, b)] += zv[a] * zv[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..k {
        for b in a..k {
            let val = cov[(a, b)] / denom;
            cov[(a, b)] = val;
            cov[(b, a)] = val;
        }
    }

    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let total: f64 = eigen.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::degenerate("PCA input has zero total variance"));
    }

    let cap = k.min(n - 1);
    let mut components = Vec::new();
    let mut ratios = Vec::new();
    let mut cum = 0.0;
    for &idx in order.iter().take(cap) {
        let ratio = eigen.eigenvalues[idx].max(0.0) / total;
        let mut component: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
        // Canonical sign: the entry of largest magnitude is positive.
        let lead = component
            .iter()
            .cloned()
            .fold(0.0_f64, |acc, c| if c.abs() > acc.abs() { c } else { acc });
        if lead < 0.0 {
            for c in &mut component {
                *c = -*c;
            }
        }
        components.push(component);
        ratios.push(ratio);
        cum += ratio;
        if cum >= target_variance {
            break;
        }
    }

    Ok(PcaModel {
        mean,
        scale,
        kept_dims,
        components,
        explained_variance_ratio: ratios,
    })
}

/// Project a vector onto the retained components.
pub fn pca_transform(model: &PcaModel, vector: &[f64]) -> Result<Vec<f64>> {
    if vector.len() != model.mean.len() {
        return Err(Error::invalid(format!(
            "PCA transform expects {} dims, got {}",
            model.mean.len(),
            vector.len()
        )));
    }
    let z: Vec<f64> = model
        .kept_dims
        .iter()
        .map(|&d| (vector[d] - model.mean[d]) / model.scale[d])
        .collect();
    Ok(model
        .components
        .iter()
        .map(|c| c.iter().zip(&z).map(|(a, b)| a * b).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn line_in_3d_needs_one_component() {
        let vectors: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let t = i as f64;
                vec![2.0 * t + 1.0, -t, 0.5 * t + 3.0]
            })
            .collect();
        let model = pca_fit(&vectors, 0.95).unwrap();
        assert_eq!(model.components.len(), 1);
        assert!((model.explained_variance_ratio[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn transform_of_mean_is_zero() {
        let vectors = vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 1.0, 5.0],
            vec![0.0, 4.0, 1.0],
        ];
        let model = pca_fit(&vectors, 0.95).unwrap();
        let out = pca_transform(&model, &model.mean.clone()).unwrap();
        for v in out {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn components_are_orthonormal_and_ratios_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vectors: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let model = pca_fit(&vectors, 0.95).unwrap();
        for (i, a) in model.components.iter().enumerate() {
            for (j, b) in model.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
        }
        for w in model.explained_variance_ratio.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        assert!(model.explained_variance_ratio.iter().sum::<f64>() <= 1.0 + 1e-8);
    }

    #[test]
    fn retained_components_cover_target_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vectors: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let a: f64 = rng.random_range(-3.0..3.0);
                let b: f64 = rng.random_range(-0.3..0.3);
                vec![
                    a + 0.01 * b,
                    a - 0.01 * b,
                    b,
                    rng.random_range(-0.05..0.05),
                ]
            })
            .collect();
        let model = pca_fit(&vectors, 0.95).unwrap();
        let retained: f64 = model.explained_variance_ratio.iter().sum();
        assert!(retained >= 0.95, "retained {retained}");
    }

    #[test]
    fn rejects_fewer_than_two_samples() {
        assert!(pca_fit(&[vec![1.0, 2.0]], 0.95).is_err());
    }

    #[test]
    fn component_count_capped_by_samples() {
        let vectors = vec![vec![1.0, 0.0, 0.0, 2.0], vec![0.0, 1.0, 3.0, 0.0]];
        let model = pca_fit(&vectors, 1.0).unwrap();
        assert!(model.components.len() <= 1);
    }
}
