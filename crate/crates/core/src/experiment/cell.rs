//! One experiment cell: forecast a single target user at one shot count
//! with one method, returning the error against the held-out horizon.

use crate::clustering::{cluster_population, ClusterConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forecaster::{
    effective_window,
    fine_tune, forecast, pretrain, prototype_series, train, LstmParams, TrainConfig,
};
use crate::metrics::{rmse, MetricConvention};
use crate::seed;
use crate::series::{slice_window, Series};
use crate::wavelet::DenoiseConfig;

use super::config::Method;

/// Everything a cell run produces.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub rmse: f64,
    pub forecast: Vec<f64>,
    pub truth: Vec<f64>,
    /// Feature-space silhouette of the population clustering (FSL only).
    pub s_score: Option<f64>,
    /// Whether the query landed in a cluster whose historical majority
    /// shares the target's ground-truth group (synthetic data only).
    pub query_correct: Option<bool>,
    /// Members of the query's cluster used for the prototype.
    pub cluster_size: Option<usize>,
}

pub struct CellSpec<'a> {
    pub dataset: &'a Dataset,
    pub target_index: usize,
    pub k: usize,
    pub horizon: usize,
    pub method: Method,
    pub cell_seed: u64,
    pub clustering: &'a ClusterConfig,
    pub train: &'a TrainConfig,
    pub metric: MetricConvention,
}

/// Run one cell end to end. Both methods consume the identical few-shot
/// window and identical test window of the target.
pub fn run_cell(spec: &CellSpec) -> Result<CellOutcome> {
    let target = spec
        .dataset
        .series
        .get(spec.target_index)
        .ok_or_else(|| Error::invalid("target index out of range"))?;
    if target.len() < spec.k + spec.horizon {
        return Err(Error::invalid(format!(
            "target {} has {} samples, needs {}",
            target.user_id,
            target.len(),
            spec.k + spec.horizon
        )));
    }
    let few_shot = slice_window(target, 0, spec.k)?;
    let truth = slice_window(target, spec.k, spec.horizon)?;

    let outcome = match spec.method {
        Method::Baseline => run_baseline(spec, &few_shot, &truth)?,
        Method::Fsl => run_fsl(spec, target, &few_shot, &truth)?,
    };
    Ok(outcome)
}

fn finish(
    model: &crate::forecaster::TrainedModel,
    few_shot: &Series,
    truth: &Series,
    spec: &CellSpec,
    s_score: Option<f64>,
    query_correct: Option<bool>,
    cluster_size: Option<usize>,
) -> Result<CellOutcome> {
    let window = &few_shot.values[few_shot.len() - model.window_len..];
    let predicted = forecast(model, window, spec.horizon)?;
    let err = rmse(&truth.values, &predicted, spec.metric)?;
    Ok(CellOutcome {
        rmse: err,
        forecast: predicted,
        truth: truth.values.clone(),
        s_score,
        query_correct,
        cluster_size,
    })
}

/// Plain LSTM trained on the shots only, with the same total gradient
/// budget as pretraining plus fine-tuning.
fn run_baseline(spec: &CellSpec, few_shot: &Series, truth: &Series) -> Result<CellOutcome> {
    let steps = spec.train.pretrain_steps + spec.train.finetune_steps;
    let init = LstmParams::init(
        spec.train.hidden_size,
        seed::derive(spec.cell_seed, "baseline-init", 0),
    );
    let model = train(
        init,
        few_shot,
        steps,
        spec.train,
        seed::derive(spec.cell_seed, "baseline-train", 0),
    )?;
    finish(&model, few_shot, truth, spec, None, None, None)
}

/// The clustering-enabled pipeline: assign the few-shot window to a
/// consensus cluster of the historical population, pretrain on that
/// cluster's denoised prototype, fine-tune on the shots.
fn run_fsl(
    spec: &CellSpec,
    target: &Series,
    few_shot: &Series,
    truth: &Series,
) -> Result<CellOutcome> {
    let historical: Vec<Series> = spec
        .dataset
        .series
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != spec.target_index)
        .map(|(_, s)| s.clone())
        .collect();
    let historical_indices: Vec<usize> = (0..spec.dataset.series.len())
        .filter(|i| *i != spec.target_index)
        .collect();

    let mut cluster_config = spec.clustering.clone();
    cluster_config.seed = seed::derive(spec.cell_seed, "cluster", 0);
    let clustering = cluster_population(&historical, few_shot, &cluster_config)?;

    let labels = &clustering.consensus.final_labeling.labels;
    let member_ids: Vec<usize> = (0..historical.len())
        .filter(|&i| labels[i] == clustering.query_cluster)
        .collect();
    // A query alone in its cluster falls back to the whole population.
    let member_ids = if member_ids.is_empty() {
        log::warn!(
            "query {} isolated in its consensus cluster; prototype uses all historical users",
            target.user_id
        );
        (0..historical.len()).collect()
    } else {
        member_ids
    };
    let members: Vec<Series> = member_ids.iter().map(|&i| historical[i].clone()).collect();
    let cluster_size = members.len();

    let query_correct = spec.dataset.group_labels.as_ref().map(|groups| {
        let target_group = groups[spec.target_index];
        let mut votes = std::collections::HashMap::new();
        for &m in &member_ids {
            *votes.entry(groups[historical_indices[m]]).or_insert(0usize) += 1;
        }
        let majority = votes
            .iter()
            .max_by_key(|(group, count)| (**count, usize::MAX - **group))
            .map(|(group, _)| *group);
        majority == Some(target_group)
    });

    let prototype = prototype_series(&members, Some(&DenoiseConfig::default()))?;
    // Pretrain with the window fine-tuning will use, so the learned
    // dynamics transfer across phases even when tiny k shrinks the window.
    let model_config = TrainConfig {
        seed: seed::derive(spec.cell_seed, "model", 0),
        window_len: effective_window(spec.k, spec.train.window_len),
        ..spec.train.clone()
    };
    let pretrained = pretrain(&prototype, &model_config)?;
    let tuned = fine_tune(&pretrained, few_shot, &model_config)?;
    finish(
        &tuned,
        few_shot,
        truth,
        spec,
        Some(clustering.consensus.s_score),
        query_correct,
        Some(cluster_size),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use crate::features::{FeatureConfig, PcaMode};
    use crate::wavelet::WaveletKind;

    fn test_cluster_config() -> ClusterConfig {
        ClusterConfig {
            features: FeatureConfig {
                wavelet: WaveletKind::Haar,
                stl_period: 10,
                pca: PcaMode::WaveletBlock,
                ..FeatureConfig::default()
            },
            ..ClusterConfig::default()
        }
    }

    fn test_train_config() -> TrainConfig {
        TrainConfig {
            hidden_size: 16,
            pretrain_steps: 30,
            finetune_steps: 15,
            ..TrainConfig::default()
        }
    }

    fn dataset(seed: u64) -> Dataset {
        synth_generate(&SynthConfig {
            users_per_group: 6,
            periods: vec![10, 20],
            length: 160,
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn both_methods_run_and_report_errors() {
        let ds = dataset(1);
        let clustering = test_cluster_config();
        let train = test_train_config();
        for method in [Method::Fsl, Method::Baseline] {
            let outcome = run_cell(&CellSpec {
                dataset: &ds,
                target_index: 2,
                k: 24,
                horizon: 72,
                method,
                cell_seed: 5,
                clustering: &clustering,
                train: &train,
                metric: MetricConvention::Rmse,
            })
            .unwrap();
            assert!(outcome.rmse.is_finite());
            assert_eq!(outcome.forecast.len(), 72);
            assert_eq!(outcome.truth.len(), 72);
        }
    }

    #[test]
    fn fsl_records_clustering_diagnostics() {
        let ds = dataset(2);
        let clustering = test_cluster_config();
        let train = test_train_config();
        let outcome = run_cell(&CellSpec {
            dataset: &ds,
            target_index: 0,
            k: 40,
            horizon: 72,
            method: Method::Fsl,
            cell_seed: 9,
            clustering: &clustering,
            train: &train,
            metric: MetricConvention::Rmse,
        })
        .unwrap();
        assert!(outcome.s_score.is_some());
        assert!(outcome.query_correct.is_some());
        assert!(outcome.cluster_size.unwrap() >= 1);
    }

    #[test]
    fn cell_rejects_short_targets() {
        let ds = dataset(3);
        let clustering = test_cluster_config();
        let train = test_train_config();
        let err = run_cell(&CellSpec {
            dataset: &ds,
            target_index: 0,
            k: 100,
            horizon: 72,
            method: Method::Baseline,
            cell_seed: 0,
            clustering: &clustering,
            train: &train,
            metric: MetricConvention::Rmse,
        })
        .unwrap_err();
        assert!(err.to_string().contains("needs 172"));
    }

    #[test]
    fn deterministic_given_cell_seed() {
        let ds = dataset(4);
        let clustering = test_cluster_config();
        let train = test_train_config();
        let spec = CellSpec {
            dataset: &ds,
            target_index: 1,
            k: 24,
            horizon: 72,
            method: Method::Fsl,
            cell_seed: 77,
            clustering: &clustering,
            train: &train,
            metric: MetricConvention::Rmse,
        };
        let a = run_cell(&spec).unwrap();
        let b = run_cell(&spec).unwrap();
        assert_eq!(a.rmse, b.rmse);
        assert_eq!(a.forecast, b.forecast);
    }
}
