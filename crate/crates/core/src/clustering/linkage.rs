//! Average-linkage agglomerative merging over a precomputed dissimilarity
//! matrix. Shared by feature-space hierarchical clustering and by the
//! co-association graph partitioner.

use crate::error::{Error, Result};

/// Merge clusters bottom-up under average linkage (UPGMA) until `k` remain.
/// Ties between equal merge distances resolve to the pair whose smallest
/// member indices are lexicographically least, so the result is fully
/// deterministic. Returns per-sample cluster labels, numbered by each
/// cluster's smallest member index.
pub fn linkage_cut(dist: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    let n = dist.len();
    if n == 0 {
        return Err(Error::invalid("cannot cluster an empty dissimilarity matrix"));
    }
    if dist.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("dissimilarity matrix must be square"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "cluster count {k} out of range for {n} samples"
        )));
    }

    // Active clusters keyed by their smallest member index.
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    // Average pairwise distance between cluster representatives, maintained
    // with the Lance-Williams update for average linkage.
    let mut d: Vec<Vec<f64>> = dist.to_vec();
    let mut active = n;

    while active > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if members[i].is_none() {
                continue;
            }
            for j in (i + 1)..n {
                if members[j].is_none() {
                    continue;
                }
                let dij = d[i][j];
                let better = match best {
                    None => true,
                    Some((bd, _, _)) => dij < bd,
                };
                if better {
                    best = Some((dij, i, j));
                }
            }
        }
        let (_, i, j) = best.ok_or_else(|| Error::Internal("no mergeable pair".into()))?;
        let size_i = members[i].as_ref().unwrap().len() as f64;
        let size_j = members[j].as_ref().unwrap().len() as f64;
        for c in 0..n {
            if c == i || c == j || members[c].is_none() {
                continue;
            }
            d[i][c] = (size_i * d[i][c] + size_j * d[j][c]) / (size_i + size_j);
            d[c][i] = d[i][c];
        }
        let absorbed = members[j].take().unwrap();
        members[i].as_mut().unwrap().extend(absorbed);
        active -= 1;
    }

    let mut labels = vec![0usize; n];
    let mut cluster_id = 0usize;
    for m in members.iter().flatten() {
        for &sample in m {
            labels[sample] = cluster_id;
        }
        cluster_id += 1;
    }
    Ok(labels)
}

/// Squared Euclidean distance.
pub fn euclidean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Full pairwise Euclidean distance matrix.
pub fn distance_matrix(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = euclidean_sq(&x[i], &x[j]).sqrt();
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    d
}
