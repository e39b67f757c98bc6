//! Time-domain statistical descriptors: seasonal/trend strength, skewness,
//! sample entropy, and the cumulative-sum Hurst statistic.

use crate::error::{Error, Result};
use crate::series::{population_mean, population_std, Series};

fn population_var(values: &[f64]) -> f64 {
    let mean = population_mean(values);
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64
}

const VAR_EPS: f64 = 1e-24;

/// Ordinary least-squares line fit, returned as fitted values.
fn linear_fit(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let tbar = (n - 1.0) / 2.0;
    let ybar = population_mean(values);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in values.iter().enumerate() {
        let dt = i as f64 - tbar;
        num += dt * (y - ybar);
        den += dt * dt;
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    (0..values.len())
        .map(|i| ybar + slope * (i as f64 - tbar))
        .collect()
}

/// Centered moving-average trend of window `period`. For even periods the
/// standard symmetric form over `period + 1` points with half-weighted ends
/// is used. Edges are extended by linear extrapolation of the interior
/// trend, which keeps polynomial trends of degree <= 1 exact.
fn moving_average_trend(values: &[f64], period: usize) -> Option<Vec<f64>> {
    let n = values.len();
    let even = period % 2 == 0;
    let half = period / 2;
    let lo = half;
    let hi = n.checked_sub(half)?;
    if hi <= lo + 1 {
        return None;
    }
    let mut trend = vec![0.0; n];
    for i in lo..hi {
        let t = if even {
            let mut sum = 0.5 * (values[i - half] + values[i + half]);
            for j in (i - half + 1)..(i + half) {
                sum += values[j];
            }
            sum / period as f64
        } else {
            values[i - half..=i + half].iter().sum::<f64>() / period as f64
        };
        trend[i] = t;
    }
    let first_slope = trend[lo + 1] - trend[lo];
    for i in 0..lo {
        trend[i] = trend[lo] - (lo - i) as f64 * first_slope;
    }
    let last_slope = trend[hi - 1] - trend[hi - 2];
    for i in hi..n {
        trend[i] = trend[hi - 1] + (i - hi + 1) as f64 * last_slope;
    }
    Some(trend)
}

/// Strength-of-seasonality and strength-of-trend from a classical additive
/// decomposition `X = T + S + E`:
///
/// `s_deg = 1 - var(E)/var(X - T)` and `t_deg = 1 - var(E)/var(X - S)`,
/// each clamped to `[0, 1]`; a vanishing denominator yields 0.
///
/// Series shorter than two full periods fall back to a trend-only fit
/// (OLS line), with the seasonal component zero and `s_deg = 0`.
pub fn stl_degrees(series: &Series, period: usize) -> Result<(f64, f64)> {
    if period == 0 {
        return Err(Error::invalid("decomposition period must be >= 1"));
    }
    let values = &series.values;
    let n = values.len();

    let strength = |residual_var: f64, denom_var: f64| -> f64 {
        if denom_var < VAR_EPS {
            0.0
        } else {
            (1.0 - residual_var / denom_var).clamp(0.0, 1.0)
        }
    };

    let trend_only = |trend: Vec<f64>| -> (f64, f64) {
        let residual: Vec<f64> = values.iter().zip(&trend).map(|(x, t)| x - t).collect();
        let t_deg = strength(population_var(&residual), population_var(values));
        (0.0, t_deg)
    };

    if n < 2 * period {
        return Ok(trend_only(linear_fit(values)));
    }
    let trend = match moving_average_trend(values, period) {
        Some(t) => t,
        None => return Ok(trend_only(linear_fit(values))),
    };

    let detrended: Vec<f64> = values.iter().zip(&trend).map(|(x, t)| x - t).collect();
    // Period-averaged seasonal component, centered to mean zero.
    let mut phase_sum = vec![0.0; period];
    let mut phase_count = vec![0usize; period];
    for (i, d) in detrended.iter().enumerate() {
        phase_sum[i % period] += d;
        phase_count[i % period] += 1;
    }
    let mut phase_mean: Vec<f64> = phase_sum
        .iter()
        .zip(&phase_count)
        .map(|(s, c)| s / (*c).max(1) as f64)
        .collect();
    let overall = population_mean(&phase_mean);
    for p in &mut phase_mean {
        *p -= overall;
    }
    let seasonal: Vec<f64> = (0..n).map(|i| phase_mean[i % period]).collect();

    let residual: Vec<f64> = (0..n)
        .map(|i| values[i] - trend[i] - seasonal[i])
        .collect();
    let deseasoned: Vec<f64> = (0..n).map(|i| values[i] - seasonal[i]).collect();

    let var_e = population_var(&residual);
    let s_deg = strength(var_e, population_var(&detrended));
    let t_deg = strength(var_e, population_var(&deseasoned));
    Ok((s_deg, t_deg))
}

/// Population-moment skewness `E[((X - mu)/sigma)^3]`; zero-variance series
/// return 0 by convention.
pub fn skewness(series: &Series) -> Result<f64> {
    let values = &series.values;
    if values.len() < 3 {
        return Err(Error::invalid("skewness needs at least 3 samples"));
    }
    let mean = population_mean(values);
    let std = population_std(values);
    if std <= 0.0 {
        return Ok(0.0);
    }
    Ok(values
        .iter()
        .map(|v| ((v - mean) / std).powi(3))
        .sum::<f64>()
        / values.len() as f64)
}

/// Raw template-pair counts behind sample entropy: unordered pairs `i < j`
/// of equal-length templates whose Chebyshev distance is strictly below `r`,
/// counted over every valid template start.
pub fn template_match_counts(values: &[f64], m: usize, r: f64) -> (u64, u64) {
    let count = |len: usize| -> u64 {
        if values.len() < len {
            return 0;
        }
        let starts = values.len() - len + 1;
        let mut matches = 0u64;
        for i in 0..starts {
            for j in (i + 1)..starts {
                let mut dist: f64 = 0.0;
                for k in 0..len {
                    dist = dist.max((values[i + k] - values[j + k]).abs());
                }
                if dist < r {
                    matches += 1;
                }
            }
        }
        matches
    };
    (count(m), count(m + 1))
}

/// Sample entropy with template length `m` and tolerance `r` (defaulting to
/// `0.2 * population std` when `None`).
///
/// `N_m` counts matching unordered pairs over all length-`m` templates and
/// `N_{m+1}` over all length-`m+1` templates; the returned value is
/// `-ln(N_{m+1} / N_m)`, which is non-negative up to the one-template
/// difference between the two ranges. `strict_paper` flips the ratio.
/// A zero-variance series returns 0; a zero match count on either length is
/// reported as undefined.
pub fn sample_entropy(
    series: &Series,
    m: usize,
    r: Option<f64>,
    strict_paper: bool,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("template length m must be >= 1"));
    }
    let values = &series.values;
    if values.len() < m + 2 {
        return Err(Error::invalid(format!(
            "sample entropy needs at least {} samples, got {}",
            m + 2,
            values.len()
        )));
    }
    let std = population_std(values);
    let r = match r {
        Some(r) => r,
        None => {
            if std <= 0.0 {
                return Ok(0.0);
            }
            0.2 * std
        }
    };
    if std <= 0.0 {
        return Ok(0.0);
    }
    if r <= 0.0 {
        return Err(Error::invalid("tolerance r must be positive"));
    }
    let (n_m, n_m1) = template_match_counts(values, m, r);
    if n_m == 0 || n_m1 == 0 {
        return Err(Error::UndefinedEntropy(format!(
            "no template matches (N_m = {n_m}, N_m+1 = {n_m1})"
        )));
    }
    let ratio = n_m1 as f64 / n_m as f64;
    Ok(if strict_paper {
        ratio.ln()
    } else {
        -ratio.ln()
    })
}

/// Smoothed fallback used by the feature extractor when the exact count
/// ratio is undefined: `-ln((N_{m+1} + 1/2) / (N_m + 1))`.
pub fn sample_entropy_or_cap(series: &Series, m: usize, r: Option<f64>, strict: bool) -> f64 {
    match sample_entropy(series, m, r, strict) {
        Ok(v) => v,
        Err(Error::UndefinedEntropy(_)) => {
            let std = population_std(&series.values);
            let r = r.unwrap_or(0.2 * std);
            let (n_m, n_m1) = template_match_counts(&series.values, m, r);
            let ratio = (n_m1 as f64 + 0.5) / (n_m as f64 + 1.0);
            if strict {
                ratio.ln()
            } else {
                -ratio.ln()
            }
        }
        Err(_) => 0.0,
    }
}

/// Cumulative-sum range statistic: standardize, accumulate, and return
/// `(2/N) * ln(max(Y) - min(Y))`. Zero-variance series return 0.
pub fn hurst_k(series: &Series) -> Result<f64> {
    let values = &series.values;
    if values.len() < 2 {
        return Err(Error::invalid("hurst statistic needs at least 2 samples"));
    }
    let mean = population_mean(values);
    let std = population_std(values);
    if std <= 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for v in values {
        acc += (v - mean) / std;
        max = max.max(acc);
        min = min.min(acc);
    }
    let range = max - min;
    if range <= 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 / values.len() as f64 * range.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(values: Vec<f64>) -> Series {
        Series::from_values("u0", values).unwrap()
    }

    #[test]
    fn stl_ramp_has_full_trend_strength() {
        for period in [5usize, 8, 12] {
            let ramp: Vec<f64> = (0..60).map(|i| 0.5 + 0.25 * i as f64).collect();
            let (s_deg, t_deg) = stl_degrees(&series(ramp), period).unwrap();
            assert!((t_deg - 1.0).abs() < 1e-6, "period {period}: t_deg {t_deg}");
            assert!(s_deg.abs() < 1e-6);
        }
    }

    #[test]
    fn stl_sinusoid_has_high_seasonal_strength() {
        for period in [10usize, 15] {
            let x: Vec<f64> = (0..period * 5)
                .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period as f64).sin())
                .collect();
            let (s_deg, _) = stl_degrees(&series(x), period).unwrap();
            assert!(s_deg >= 0.99, "period {period}: s_deg {s_deg}");
        }
    }

    #[test]
    fn stl_short_series_falls_back_to_trend_fit() {
        let ramp: Vec<f64> = (0..12).map(|i| 2.0 * i as f64).collect();
        let (s_deg, t_deg) = stl_degrees(&series(ramp), 10).unwrap();
        assert_eq!(s_deg, 0.0);
        assert!((t_deg - 1.0).abs() < 1e-9);
    }

    #[test]
    fn skewness_symmetric_and_degenerate() {
        assert_eq!(skewness(&series(vec![1.0, 2.0, 3.0])).unwrap(), 0.0);
        assert_eq!(skewness(&series(vec![5.0, 5.0, 5.0])).unwrap(), 0.0);
    }

    #[test]
    fn skewness_direct_moment_arithmetic() {
        // mean 0.8, population std 1.6: ((-0.5)^3 * 4 + 2^3) / 5 = 1.5
        let v = skewness(&series(vec![0.0, 0.0, 0.0, 0.0, 4.0])).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn sample_entropy_periodic_example() {
        // Exhaustive enumeration: N_m = 4 over the five length-2 templates,
        // N_{m+1} = 2 over the four length-3 templates.
        let s = series(vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let (n_m, n_m1) = template_match_counts(&s.values, 2, 0.1);
        assert_eq!((n_m, n_m1), (4, 2));
        let v = sample_entropy(&s, 2, Some(0.1), false).unwrap();
        assert!((v - 2.0_f64.ln()).abs() < 1e-12);
        let strict = sample_entropy(&s, 2, Some(0.1), true).unwrap();
        assert!((strict + 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sample_entropy_constant_series() {
        assert_eq!(
            sample_entropy(&series(vec![5.0; 6]), 2, None, false).unwrap(),
            0.0
        );
    }

    #[test]
    fn sample_entropy_undefined_when_no_matches() {
        let s = series(vec![0.0, 100.0, -50.0, 300.0, -200.0, 700.0]);
        match sample_entropy(&s, 2, Some(1e-6), false) {
            Err(Error::UndefinedEntropy(_)) => {}
            other => panic!("expected undefined entropy, got {other:?}"),
        }
        assert!(sample_entropy_or_cap(&s, 2, Some(1e-6), false).is_finite());
    }

    #[test]
    fn periodic_series_no_more_entropic_than_shuffled() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let periodic: Vec<f64> = (0..60)
                .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 12.0).sin())
                .collect();
            let mut shuffled = periodic.clone();
            shuffled.shuffle(&mut rng);
            let e_p = sample_entropy_or_cap(&series(periodic), 2, None, false);
            let e_s = sample_entropy_or_cap(&series(shuffled), 2, None, false);
            assert!(e_p <= e_s, "periodic {e_p} vs shuffled {e_s}");
        }
    }

    #[test]
    fn hurst_alternating_and_degenerate() {
        assert_eq!(hurst_k(&series(vec![1.0, -1.0, 1.0, -1.0])).unwrap(), 0.0);
        assert_eq!(hurst_k(&series(vec![5.0, 5.0])).unwrap(), 0.0);
    }

    #[test]
    fn hurst_direct_evaluation() {
        // Standardized [0,1,2,3] cumsums to range 1.7889.
        let v = hurst_k(&series(vec![0.0, 1.0, 2.0, 3.0])).unwrap();
        assert!((v - 0.2908).abs() < 1e-3, "{v}");
    }

    #[test]
    fn stats_invariant_to_positive_affine_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let x: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| 3.5 * v + 11.0).collect();
            let sx = series(x);
            let sy = series(y);
            assert!((skewness(&sx).unwrap() - skewness(&sy).unwrap()).abs() < 1e-6);
            assert!((hurst_k(&sx).unwrap() - hurst_k(&sy).unwrap()).abs() < 1e-6);
            let ex = sample_entropy_or_cap(&sx, 2, None, false);
            let ey = sample_entropy_or_cap(&sy, 2, None, false);
            assert!((ex - ey).abs() < 1e-6);
        }
    }
}
