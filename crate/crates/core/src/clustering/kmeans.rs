//! Lloyd's algorithm with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linkage::euclidean_sq;
use super::Labeling;
use crate::error::{Error, Result};

const SHIFT_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 300;

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = euclidean_sq(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn kmeans_pp_init(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(x[rng.random_range(0..n)].clone());
    while centroids.len() < k {
        let d2: Vec<f64> = x
            .iter()
            .map(|p| nearest_centroid(p, &centroids).1)
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All points coincide with a centroid; take the first uncovered.
            (0..n)
                .find(|&i| !centroids.iter().any(|c| c == &x[i]))
                .unwrap_or(0)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centroids.push(x[next].clone());
    }
    centroids
}

/// Within-cluster sum of squared distances.
#[cfg(test)]
pub fn sse(x: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    x.iter()
        .zip(labels)
        .map(|(p, &l)| euclidean_sq(p, &centroids[l]))
        .sum()
}

pub(super) struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

pub(super) fn kmeans_fit(x: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "k = {k} out of range for {n} samples"
        )));
    }
    let dims = x[0].len();
    if x.iter().any(|p| p.len() != dims) {
        return Err(Error::invalid("feature rows differ in length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(x, k, &mut rng);
    let mut labels = vec![0usize; n];

    for _ in 0..MAX_ITERS {
        for (i, p) in x.iter().enumerate() {
            labels[i] = nearest_centroid(p, &centroids).0;
        }
        // Reseed empty clusters to the point farthest from its centroid,
        // skipping points that are alone in their cluster.
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            while counts[c] == 0 {
                let far = x
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| counts[labels[*i]] > 1)
                    .max_by(|(i, p), (j, q)| {
                        let di = euclidean_sq(p, &centroids[labels[*i]]);
                        let dj = euclidean_sq(q, &centroids[labels[*j]]);
                        di.partial_cmp(&dj).unwrap().then(j.cmp(i))
                    })
                    .map(|(i, _)| i);
                match far {
                    Some(i) => {
                        counts[labels[i]] -= 1;
                        labels[i] = c;
                        counts[c] += 1;
                        centroids[c] = x[i].clone();
                    }
                    None => break,
                }
            }
        }

        let mut next = vec![vec![0.0; dims]; k];
        let mut sizes = vec![0usize; k];
        for (p, &l) in x.iter().zip(&labels) {
            sizes[l] += 1;
            for (acc, v) in next[l].iter_mut().zip(p) {
                *acc += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if sizes[c] == 0 {
                continue;
            }
            for v in &mut next[c] {
                *v /= sizes[c] as f64;
            }
            shift = shift.max(euclidean_sq(&centroids[c], &next[c]).sqrt());
            centroids[c] = std::mem::take(&mut next[c]);
        }
        if shift < SHIFT_TOL {
            break;
        }
    }
    for (i, p) in x.iter().enumerate() {
        labels[i] = nearest_centroid(p, &centroids).0;
    }
    Ok(KMeansFit { labels, centroids })
}

/// Cluster `x` into `k` groups; deterministic given `seed`.
pub fn kmeans(x: &[Vec<f64>], k: usize, seed: u64) -> Result<Labeling> {
    let fit = kmeans_fit(x, k, seed)?;
    Labeling::from_labels(fit.labels, "kmeans", seed, true)
}
