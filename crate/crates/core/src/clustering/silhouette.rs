//! Silhouette scoring of a labeling.

use super::linkage::distance_matrix;
use crate::error::{Error, Result};

/// Mean over samples of `(b - a) / max(a, b)` where `a` is the mean
/// distance to the sample's own cluster and `b` the smallest mean distance
/// to any other cluster. Samples in singleton clusters score 0.
pub fn silhouette_from_distances(dist: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if dist.len() != n {
        return Err(Error::invalid("distance matrix and labels disagree"));
    }
    let k = labels.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    if k < 2 {
        return Err(Error::invalid("silhouette needs at least 2 clusters"));
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::invalid("every cluster must be non-empty"));
    }

    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] == 1 {
            continue; // scores 0
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist[i][j];
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c != own {
                b = b.min(sums[c] / sizes[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Silhouette of `labels` over the Euclidean geometry of `x`.
pub fn silhouette(x: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if x.len() != labels.len() {
        return Err(Error::invalid("points and labels disagree in length"));
    }
    silhouette_from_distances(&distance_matrix(x), labels)
}
