//! Two-phase LSTM forecasting: pretrain on a cluster's denoised prototype,
//! fine-tune on the k-shot sample, then forecast recursively.

mod adam;
mod lstm;

pub use adam::{AdamConfig, AdamState};
pub use lstm::{backward, forward, LstmGrads, LstmParams, LstmStates};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::series::Series;
use crate::wavelet::{denoise, DenoiseConfig};

/// How `pretrain_steps` / `finetune_steps` are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepUnit {
    /// Each step is one gradient update (default).
    Updates,
    /// Each step is one pass over all training pairs in batches.
    Epochs,
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Input sequence length; auto-shrunk to `len/2` when a series is too
    /// short to yield a single (window, next-value) pair.
    pub window_len: usize,
    pub hidden_size: usize,
    pub seed: u64,
    pub step_unit: StepUnit,
    /// Pretrain on every member series instead of the prototype only.
    pub pretrain_on_members: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 72,
            learning_rate: 0.001,
            pretrain_steps: 130,
            finetune_steps: 70,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            window_len: 12,
            hidden_size: 64,
            seed: 0,
            step_unit: StepUnit::Updates,
            pretrain_on_members: false,
        }
    }
}

impl TrainConfig {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Min-max normalization to [0, 1], retained for inverse transforms.
/// A zero-range (constant) series maps to 0 and inverts to the constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub range: f64,
}

impl MinMaxScaler {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        MinMaxScaler {
            min,
            range: max - min,
        }
    }

    pub fn scale(&self, x: f64) -> f64 {
        if self.range > 0.0 {
            (x - self.min) / self.range
        } else {
            0.0
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        self.min + y * self.range
    }
}

/// A trained forecaster: weights, the scaler of its last training phase, and
/// the window length it consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    /// Checkpoint format version.
    pub schema: String,
    pub params: LstmParams,
    pub scaler: MinMaxScaler,
    pub window_len: usize,
}

pub const CHECKPOINT_SCHEMA: &str = "fslcast-lstm-v1";

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("checkpoint serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text)
            .map_err(|e| Error::Data(format!("checkpoint parse failed: {e}")))?;
        if model.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Data(format!(
                "unsupported checkpoint schema {:?}",
                model.schema
            )));
        }
        model.params.validate()?;
        Ok(model)
    }

    /// Mean squared one-step-ahead error over all (window, next) pairs of
    /// `series`, in the model's scaled units.
    pub fn one_step_mse(&self, series: &Series) -> Result<f64> {
        let scaled: Vec<f64> = series.values.iter().map(|v| self.scaler.scale(*v)).collect();
        let pairs = sliding_pairs(&scaled, self.window_len)?;
        let mut total = 0.0;
        for (start, target) in &pairs {
            let (pred, _) = forward(&self.params, &scaled[*start..*start + self.window_len])?;
            total += (pred - target).powi(2);
        }
        Ok(total / pairs.len() as f64)
    }
}

/// Effective window for a series of `len` samples: the configured window, or
/// `len / 2` when the series cannot yield a single training pair.
pub fn effective_window(len: usize, window_len: usize) -> usize {
    if len >= window_len + 1 {
        window_len
    } else {
        (len / 2).max(1)
    }
}

/// All (window start, next value) pairs under a sliding window.
fn sliding_pairs(scaled: &[f64], window: usize) -> Result<Vec<(usize, f64)>> {
    if scaled.len() < window + 1 {
        return Err(Error::invalid(format!(
            "series of length {} yields no ({window}-window, target) pairs",
            scaled.len()
        )));
    }
    Ok((0..scaled.len() - window)
        .map(|start| (start, scaled[start + window]))
        .collect())
}

/// Train `params` on `series` for `steps` gradient updates (or epochs, per
/// the config). Each update samples a batch of `batch_size` pairs — without
/// replacement when enough pairs exist, with replacement otherwise —
/// averages the squared one-step error, backpropagates through time, and
/// applies one Adam update. The series is min-max scaled to [0, 1] and the
/// scaler is kept on the returned model.
pub fn train(
    params: LstmParams,
    series: &Series,
    steps: usize,
    config: &TrainConfig,
    train_seed: u64,
) -> Result<TrainedModel> {
    params.validate()?;
    let window = effective_window(series.len(), config.window_len);
    let scaler = MinMaxScaler::fit(&series.values);
    let scaled: Vec<f64> = series.values.iter().map(|v| scaler.scale(*v)).collect();
    let pairs = sliding_pairs(&scaled, window)?;

    let updates = match config.step_unit {
        StepUnit::Updates => steps,
        StepUnit::Epochs => steps * pairs.len().div_ceil(config.batch_size),
    };

    let mut params = params;
    let mut rng = ChaCha8Rng::seed_from_u64(train_seed);
    let mut adam = AdamState::new(params.hidden, config.adam());
    let mut grads = LstmGrads::zeros(params.hidden);
    let batch = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut cursor = pairs.len(); // force an initial shuffle

    for _ in 0..updates {
        grads.reset();
        let mut indices = Vec::with_capacity(batch);
        if pairs.len() >= batch {
            // Without replacement: refill from a reshuffled deck as needed.
            for _ in 0..batch {
                if cursor >= order.len() {
                    for i in (1..order.len()).rev() {
                        order.swap(i, rng.random_range(0..=i));
                    }
                    cursor = 0;
                }
                indices.push(order[cursor]);
                cursor += 1;
            }
        } else {
            for _ in 0..batch {
                indices.push(rng.random_range(0..pairs.len()));
            }
        }
        let inv_batch = 1.0 / batch as f64;
        for &idx in &indices {
            let (start, target) = pairs[idx];
            let (pred, states) = forward(&params, &scaled[start..start + window])?;
            let d_pred = 2.0 * (pred - target) * inv_batch;
            backward(&params, &states, d_pred, &mut grads);
        }
        adam.step(&mut params, &grads);
    }
    params.validate()?;
    Ok(TrainedModel {
        schema: CHECKPOINT_SCHEMA.to_string(),
        params,
        scaler,
        window_len: window,
    })
}

/// A cluster's prototype: the pointwise mean of its member series, wavelet
/// denoised unless `denoise_config` is `None`.
pub fn prototype_series(
    members: &[Series],
    denoise_config: Option<&DenoiseConfig>,
) -> Result<Series> {
    let first = members
        .first()
        .ok_or_else(|| Error::invalid("prototype needs at least one member"))?;
    let len = first.len();
    if members.iter().any(|m| m.len() != len) {
        return Err(Error::invalid("prototype members differ in length"));
    }
    let mut mean = vec![0.0; len];
    for m in members {
        for (acc, v) in mean.iter_mut().zip(&m.values) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= members.len() as f64;
    }
    let proto = Series::new(
        "prototype",
        first.start_index,
        first.granularity_minutes,
        mean,
    )?;
    match denoise_config {
        Some(config) => denoise(&proto, config),
        None => Ok(proto),
    }
}

/// Phase 1: train from a seeded random init on the prototype series.
pub fn pretrain(prototype: &Series, config: &TrainConfig) -> Result<TrainedModel> {
    let params = LstmParams::init(config.hidden_size, seed::derive(config.seed, "init", 0));
    train(
        params,
        prototype,
        config.pretrain_steps,
        config,
        seed::derive(config.seed, "pretrain", 0),
    )
}

/// Phase 2: continue from the pretrained weights on the few-shot sample,
/// refitting the scaler to the few-shot data. Adam moments restart.
pub fn fine_tune(
    pretrained: &TrainedModel,
    few_shot: &Series,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    train(
        pretrained.params.clone(),
        few_shot,
        config.finetune_steps,
        config,
        seed::derive(config.seed, "finetune", 0),
    )
}

/// Recursive multi-step forecast: each one-step prediction is appended to
/// the window and the oldest element dropped. `seed_window` is in raw units
/// and must match the model's window length; the output is inverse-scaled.
pub fn forecast(model: &TrainedModel, seed_window: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if seed_window.len() != model.window_len {
        return Err(Error::invalid(format!(
            "seed window length {} does not match the model window {}",
            seed_window.len(),
            model.window_len
        )));
    }
    let mut window: Vec<f64> = seed_window.iter().map(|v| model.scaler.scale(*v)).collect();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let (pred, _) = forward(&model.params, &window)?;
        if !pred.is_finite() {
            return Err(Error::DivergedForecast(
                "recursive prediction became non-finite".into(),
            ));
        }
        window.rotate_left(1);
        *window.last_mut().unwrap() = pred;
        out.push(model.scaler.inverse(pred));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinusoid(len: usize, period: f64) -> Series {
        let values = (0..len)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period).sin())
            .collect();
        Series::from_values("u0", values).unwrap()
    }

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_size: 16,
            window_len: 12,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_params_unchanged() {
        let params = LstmParams::init(8, 5);
        let series = sinusoid(60, 12.0);
        let config = small_config(0);
        let model = train(params.clone(), &series, 0, &config, 1).unwrap();
        assert_eq!(model.params, params);
    }

    #[test]
    fn training_reduces_mse_on_clean_sinusoid() {
        // Median over 10 seeds: 130 steps must cut the training MSE to
        // under a tenth of the initial value.
        let mut wins = 0;
        for s in 0..10u64 {
            let config = TrainConfig {
                hidden_size: 64,
                window_len: 12,
                seed: s,
                ..TrainConfig::default()
            };
            let series = sinusoid(200, 20.0);
            let init = LstmParams::init(config.hidden_size, seed::derive(s, "init", 0));
            let before = TrainedModel {
                schema: CHECKPOINT_SCHEMA.to_string(),
                params: init.clone(),
                scaler: MinMaxScaler::fit(&series.values),
                window_len: 12,
            }
            .one_step_mse(&series)
            .unwrap();
            let model = train(init, &series, 130, &config, seed::derive(s, "t", 0)).unwrap();
            let after = model.one_step_mse(&series).unwrap();
            if after < 0.1 * before {
                wins += 1;
            }
        }
        assert!(wins > 5, "mse dropped 10x in only {wins}/10 runs");
    }

    #[test]
    fn train_is_deterministic() {
        let config = small_config(4);
        let series = sinusoid(80, 10.0);
        let init = LstmParams::init(16, 2);
        let a = train(init.clone(), &series, 25, &config, 9).unwrap();
        let b = train(init, &series, 25, &config, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_auto_shrinks_for_tiny_series() {
        assert_eq!(effective_window(12, 12), 6);
        assert_eq!(effective_window(13, 12), 12);
        assert_eq!(effective_window(2, 12), 1);
        let series = Series::from_values("u", (0..12).map(|i| i as f64).collect()).unwrap();
        let config = small_config(0);
        let model = train(LstmParams::init(16, 0), &series, 3, &config, 0).unwrap();
        assert_eq!(model.window_len, 6);
    }

    #[test]
    fn train_rejects_too_short_series() {
        let series = Series::from_values("u", vec![1.0]).unwrap();
        let config = small_config(0);
        assert!(train(LstmParams::init(16, 0), &series, 1, &config, 0).is_err());
    }

    #[test]
    fn pretrain_improves_on_held_out_tail() {
        let config = small_config(11);
        let proto = sinusoid(160, 16.0);
        let head = crate::series::slice_window(&proto, 0, 120).unwrap();
        let tail = crate::series::slice_window(&proto, 120, 40).unwrap();
        let model = pretrain(&head, &config).unwrap();
        let random = TrainedModel {
            schema: CHECKPOINT_SCHEMA.to_string(),
            params: LstmParams::init(config.hidden_size, seed::derive(11, "init", 0)),
            scaler: model.scaler.clone(),
            window_len: model.window_len,
        };
        let trained_err = model.one_step_mse(&tail).unwrap();
        let random_err = random.one_step_mse(&tail).unwrap();
        assert!(
            trained_err < random_err,
            "trained {trained_err} vs random {random_err}"
        );
    }

    #[test]
    fn pretrain_on_constant_prototype_converges_to_constant() {
        let proto = Series::from_values("u", vec![7.0; 100]).unwrap();
        let config = small_config(3);
        let model = pretrain(&proto, &config).unwrap();
        // Constant input scales to 0 everywhere; prediction must approach 0.
        let (pred, _) = forward(&model.params, &vec![0.0; model.window_len]).unwrap();
        assert!(pred.abs() < 0.05, "scaled prediction {pred}");
    }

    #[test]
    fn finetune_zero_steps_is_identity_on_params() {
        let config = TrainConfig {
            finetune_steps: 0,
            ..small_config(6)
        };
        let proto = sinusoid(120, 12.0);
        let pre = pretrain(&proto, &config).unwrap();
        let few = sinusoid(24, 12.0);
        let tuned = fine_tune(&pre, &few, &config).unwrap();
        assert_eq!(tuned.params, pre.params);
        // Scaler is refit on the few-shot data.
        assert_eq!(tuned.scaler, MinMaxScaler::fit(&few.values));
    }

    #[test]
    fn finetune_runs_with_twelve_shots() {
        let config = small_config(8);
        let proto = sinusoid(120, 10.0);
        let pre = pretrain(&proto, &config).unwrap();
        let few = sinusoid(12, 10.0);
        let tuned = fine_tune(&pre, &few, &config).unwrap();
        assert_eq!(tuned.window_len, 6);
    }

    #[test]
    fn dead_network_forecasts_inverse_scaled_bias() {
        let mut params = LstmParams::zeros(8);
        params.b_out = 0.5;
        let model = TrainedModel {
            schema: CHECKPOINT_SCHEMA.to_string(),
            params,
            scaler: MinMaxScaler {
                min: 10.0,
                range: 4.0,
            },
            window_len: 3,
        };
        let out = forecast(&model, &[10.0, 11.0, 12.0], 72).unwrap();
        assert_eq!(out.len(), 72);
        for v in out {
            assert!((v - 12.0).abs() < 1e-12);
        }
    }

    #[test]
    fn horizon_one_equals_single_forward() {
        let config = small_config(9);
        let series = sinusoid(80, 10.0);
        let model = train(LstmParams::init(16, 1), &series, 20, &config, 2).unwrap();
        let window: Vec<f64> = series.values[..model.window_len].to_vec();
        let fc = forecast(&model, &window, 1).unwrap();
        let scaled: Vec<f64> = window.iter().map(|v| model.scaler.scale(*v)).collect();
        let (pred, _) = forward(&model.params, &scaled).unwrap();
        assert!((fc[0] - model.scaler.inverse(pred)).abs() < 1e-12);
    }

    #[test]
    fn two_phase_beats_constant_mean_on_clean_sinusoid() {
        let mut wins = 0;
        for s in 0..10u64 {
            let config = TrainConfig {
                hidden_size: 32,
                seed: s,
                ..small_config(s)
            };
            let proto = sinusoid(300, 20.0);
            let few = crate::series::slice_window(&proto, 0, 96).unwrap();
            let truth = crate::series::slice_window(&proto, 96, 72).unwrap();
            let pre = pretrain(&proto, &config).unwrap();
            let tuned = fine_tune(&pre, &few, &config).unwrap();
            let seed_window: Vec<f64> =
                few.values[few.len() - tuned.window_len..].to_vec();
            let fc = forecast(&tuned, &seed_window, 72).unwrap();
            let rmse = |pred: &[f64]| -> f64 {
                (truth
                    .values
                    .iter()
                    .zip(pred)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / 72.0)
                    .sqrt()
            };
            let mean_pred = vec![few.mean(); 72];
            if rmse(&fc) < rmse(&mean_pred) {
                wins += 1;
            }
        }
        assert!(wins > 5, "beat the mean predictor in only {wins}/10 runs");
    }

    #[test]
    fn forecasts_are_affine_equivariant() {
        let config = small_config(13);
        let base = sinusoid(120, 12.0);
        let scaled_series = Series::from_values(
            "u1",
            base.values.iter().map(|v| 250.0 * v + 1000.0).collect(),
        )
        .unwrap();
        let m1 = train(LstmParams::init(16, 3), &base, 40, &config, 7).unwrap();
        let m2 = train(LstmParams::init(16, 3), &scaled_series, 40, &config, 7).unwrap();
        let w1: Vec<f64> = base.values[..m1.window_len].to_vec();
        let w2: Vec<f64> = scaled_series.values[..m2.window_len].to_vec();
        let f1 = forecast(&m1, &w1, 24).unwrap();
        let f2 = forecast(&m2, &w2, 24).unwrap();
        for (a, b) in f1.iter().zip(&f2) {
            assert!(
                (250.0 * a + 1000.0 - b).abs() < 1e-6,
                "affine mismatch: {a} vs {b}"
            );
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let config = small_config(2);
        let series = sinusoid(60, 10.0);
        let model = train(LstmParams::init(16, 4), &series, 5, &config, 3).unwrap();
        let json = model.to_json().unwrap();
        assert!(json.contains(CHECKPOINT_SCHEMA));
        let back = TrainedModel::from_json(&json).unwrap();
        assert_eq!(model, back);
        assert!(TrainedModel::from_json("{\"schema\":\"nope\"}").is_err());
    }
}
