//! Affinity propagation on negative squared Euclidean similarities.

use super::linkage::euclidean_sq;
use super::Labeling;
use crate::error::{Error, Result};

const DAMPING: f64 = 0.9;
const MAX_ITERS: usize = 500;
const STABLE_ITERS: usize = 30;

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Cluster by message passing; the number of clusters emerges from the data.
/// Preference is the median off-diagonal similarity, damping 0.9. If the
/// exemplar set fails to stabilize the labeling is still returned with
/// `converged = false`.
pub fn affinity_propagation(x: &[Vec<f64>]) -> Result<Labeling> {
    let n = x.len();
    if n == 0 {
        return Err(Error::invalid("cannot cluster zero samples"));
    }
    if n == 1 {
        return Labeling::from_labels(vec![0], "affinity_propagation", 0, true);
    }

    let mut s = vec![vec![0.0; n]; n];
    let mut off_diag = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let sim = -euclidean_sq(&x[i], &x[j]);
            s[i][j] = sim;
            s[j][i] = sim;
            off_diag.push(sim);
        }
    }
    let preference = median(off_diag);
    for (i, row) in s.iter_mut().enumerate() {
        row[i] = preference;
    }

    let mut r = vec![vec![0.0; n]; n];
    let mut a = vec![vec![0.0; n]; n];
    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable = 0usize;
    let mut converged = false;

    for _ in 0..MAX_ITERS {
        // Responsibilities.
        for i in 0..n {
            let mut max1 = f64::NEG_INFINITY;
            let mut max2 = f64::NEG_INFINITY;
            let mut arg1 = 0;
            for k in 0..n {
                let v = a[i][k] + s[i][k];
                if v > max1 {
                    max2 = max1;
                    max1 = v;
                    arg1 = k;
                } else if v > max2 {
                    max2 = v;
                }
            }
            for k in 0..n {
                let competing = if k == arg1 { max2 } else { max1 };
                let new = s[i][k] - competing;
                r[i][k] = DAMPING * r[i][k] + (1.0 - DAMPING) * new;
            }
        }
        // Availabilities.
        for k in 0..n {
            let mut positive_sum = 0.0;
            for i in 0..n {
                if i != k {
                    positive_sum += r[i][k].max(0.0);
                }
            }
            for i in 0..n {
                let new = if i == k {
                    positive_sum
                } else {
                    (r[k][k] + positive_sum - r[i][k].max(0.0)).min(0.0)
                };
                a[i][k] = DAMPING * a[i][k] + (1.0 - DAMPING) * new;
            }
        }

        let current: Vec<usize> = (0..n).filter(|&k| r[k][k] + a[k][k] > 0.0).collect();
        if !current.is_empty() && current == exemplars {
            stable += 1;
            if stable >= STABLE_ITERS {
                converged = true;
                break;
            }
        } else {
            stable = 0;
        }
        exemplars = current;
    }

    if exemplars.is_empty() {
        // Degenerate input (e.g. identical points): fall back to the best
        // single candidate so the result is one cluster.
        let best = (0..n)
            .max_by(|&i, &j| {
                (r[i][i] + a[i][i])
                    .partial_cmp(&(r[j][j] + a[j][j]))
                    .unwrap()
                    .then(j.cmp(&i))
            })
            .unwrap();
        exemplars = vec![best];
        converged = false;
    }

    let labels: Vec<usize> = (0..n)
        .map(|i| {
            if let Some(pos) = exemplars.iter().position(|&e| e == i) {
                return pos;
            }
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (pos, &e) in exemplars.iter().enumerate() {
                if s[i][e] > best_sim {
                    best_sim = s[i][e];
                    best = pos;
                }
            }
            best
        })
        .collect();
    Labeling::from_labels(labels, "affinity_propagation", 0, converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_far_blobs_two_exemplars() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut x = Vec::new();
        for b in 0..2 {
            for _ in 0..10 {
                x.push(vec![
                    b as f64 * 20.0 + rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ]);
            }
        }
        let labeling = affinity_propagation(&x).unwrap();
        assert_eq!(labeling.k, 2, "labels {:?}", labeling.labels);
        for i in 1..10 {
            assert_eq!(labeling.labels[i], labeling.labels[0]);
        }
        for i in 11..20 {
            assert_eq!(labeling.labels[i], labeling.labels[10]);
        }
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let x = vec![vec![2.0, 2.0]; 6];
        let labeling = affinity_propagation(&x).unwrap();
        assert_eq!(labeling.k, 1);
        assert!(labeling.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn deterministic_without_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x: Vec<Vec<f64>> = (0..15)
            .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let a = affinity_propagation(&x).unwrap();
        let b = affinity_propagation(&x).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.converged, b.converged);
    }
}
