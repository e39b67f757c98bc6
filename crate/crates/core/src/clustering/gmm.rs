//! Diagonal-covariance Gaussian mixture fitted with EM.

use super::kmeans::kmeans_fit;
use super::Labeling;
use crate::error::{Error, Result};

const VAR_FLOOR: f64 = 1e-6;
const LL_TOL: f64 = 1e-7;
const MAX_ITERS: usize = 200;

/// A fitted mixture: per-component weight, mean, and diagonal covariance.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

fn log_component_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for d in 0..x.len() {
        let diff = x[d] - mean[d];
        acc += -0.5 * ((2.0 * std::f64::consts::PI * var[d]).ln() + diff * diff / var[d]);
    }
    acc
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// EM state after one E-step: responsibilities and the data log-likelihood.
fn e_step(x: &[Vec<f64>], gmm: &GaussianMixture) -> (Vec<Vec<f64>>, f64) {
    let k = gmm.weights.len();
    let mut resp = vec![vec![0.0; k]; x.len()];
    let mut ll = 0.0;
    for (i, p) in x.iter().enumerate() {
        let logs: Vec<f64> = (0..k)
            .map(|c| gmm.weights[c].ln() + log_component_density(p, &gmm.means[c], &gmm.variances[c]))
            .collect();
        let norm = log_sum_exp(&logs);
        ll += norm;
        for c in 0..k {
            resp[i][c] = (logs[c] - norm).exp();
        }
    }
    (resp, ll)
}

/// Fit a `k`-component mixture; initialization comes from a seeded k-means
/// run so the whole procedure is deterministic given `seed`.
pub fn gmm_fit(x: &[Vec<f64>], k: usize, seed: u64) -> Result<GaussianMixture> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "k = {k} out of range for {n} samples"
        )));
    }
    let dims = x[0].len();
    let init = kmeans_fit(x, k, seed)?;
    let mut weights = vec![0.0; k];
    let mut means = init.centroids;
    let mut variances = vec![vec![0.0; dims]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in x.iter().zip(&init.labels) {
        counts[l] += 1;
        for d in 0..dims {
            variances[l][d] += (p[d] - means[l][d]).powi(2);
        }
    }
    for c in 0..k {
        weights[c] = counts[c] as f64 / n as f64;
        for d in 0..dims {
            variances[c][d] = (variances[c][d] / counts[c].max(1) as f64).max(VAR_FLOOR);
        }
        weights[c] = weights[c].max(1e-12);
    }
    let total_w: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total_w;
    }

    let mut gmm = GaussianMixture {
        weights,
        means,
        variances,
        log_likelihood: f64::NEG_INFINITY,
        iterations: 0,
    };
    for iter in 0..MAX_ITERS {
        let (resp, ll) = e_step(x, &gmm);
        gmm.iterations = iter + 1;
        let gain = ll - gmm.log_likelihood;
        gmm.log_likelihood = ll;
        if gain.abs() < LL_TOL && iter > 0 {
            break;
        }
        // M-step.
        let mut nk = vec![0.0; k];
        for r in &resp {
            for c in 0..k {
                nk[c] += r[c];
            }
        }
        means = vec![vec![0.0; dims]; k];
        for (p, r) in x.iter().zip(&resp) {
            for c in 0..k {
                for d in 0..dims {
                    means[c][d] += r[c] * p[d];
                }
            }
        }
        for c in 0..k {
            let denom = nk[c].max(1e-12);
            for d in 0..dims {
                means[c][d] /= denom;
            }
        }
        let mut vars = vec![vec![0.0; dims]; k];
        for (p, r) in x.iter().zip(&resp) {
            for c in 0..k {
                for d in 0..dims {
                    vars[c][d] += r[c] * (p[d] - means[c][d]).powi(2);
                }
            }
        }
        for c in 0..k {
            let denom = nk[c].max(1e-12);
            for d in 0..dims {
                vars[c][d] = (vars[c][d] / denom).max(VAR_FLOOR);
            }
            gmm.weights[c] = (nk[c] / n as f64).max(1e-12);
        }
        let total_w: f64 = gmm.weights.iter().sum();
        for w in &mut gmm.weights {
            *w /= total_w;
        }
        gmm.means = means.clone();
        gmm.variances = vars;
    }
    Ok(gmm)
}

/// Cluster by maximum responsibility under the fitted mixture.
pub fn gmm_em(x: &[Vec<f64>], k: usize, seed: u64) -> Result<Labeling> {
    let gmm = gmm_fit(x, k, seed)?;
    let (resp, _) = e_step(x, &gmm);
    let labels: Vec<usize> = resp
        .iter()
        .map(|r| {
            let mut best = 0;
            for c in 1..r.len() {
                if r[c] > r[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Labeling::from_labels(labels, "gmm_em", seed, true)
}
