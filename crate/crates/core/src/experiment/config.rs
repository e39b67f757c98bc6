//! Experiment configuration: dataset source, sweep grid, and per-stage
//! settings, loadable from JSON with strict key checking.

use serde::{Deserialize, Serialize};

use crate::clustering::{BaseAlgorithm, ClusterConfig};
use crate::data::{CsvSchema, SynthConfig};
use crate::error::{Error, Result};
use crate::forecaster::TrainConfig;
use crate::metrics::MetricConvention;

/// Which of the study designs a run reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// MRMSE vs shot count, FSL against the step-budget-matched baseline.
    KSweep,
    /// MRMSE vs shot count around the period-coverage bound, FSL only.
    Granularity,
    /// Per-clusterer S-score and error spread.
    Compactness,
}

/// Where the population comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Regenerated per run seed.
    Synthetic(SynthConfig),
    /// Loaded once; run seeds only vary training and clustering.
    Csv { path: String, schema: CsvSchema },
}

/// Forecaster variants compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Cluster, pretrain on the prototype, fine-tune on the shots.
    Fsl,
    /// Train from scratch on the shots with the same total step budget.
    Baseline,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Fsl => "fsl",
            Method::Baseline => "baseline",
        }
    }
}

/// A named clustering-ensemble composition (the compactness case compares
/// several).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub name: String,
    pub algorithms: Vec<BaseAlgorithm>,
}

impl EnsembleSpec {
    /// The four single-algorithm configurations plus the full ensemble.
    pub fn compactness_suite() -> Vec<EnsembleSpec> {
        let single = |algo: BaseAlgorithm| EnsembleSpec {
            name: algo.name().to_string(),
            algorithms: vec![algo],
        };
        vec![
            single(BaseAlgorithm::KMeans),
            single(BaseAlgorithm::Agglomerative),
            single(BaseAlgorithm::GmmEm),
            single(BaseAlgorithm::AffinityPropagation),
            EnsembleSpec {
                name: "ensemble".to_string(),
                algorithms: vec![
                    BaseAlgorithm::KMeans,
                    BaseAlgorithm::GmmEm,
                    BaseAlgorithm::Agglomerative,
                    BaseAlgorithm::AffinityPropagation,
                ],
            },
        ]
    }
}

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: CaseKind,
    pub dataset: DatasetSource,
    /// Target granularities in minutes; each must be a multiple of the
    /// dataset granularity.
    pub granularities: Vec<u32>,
    /// Shot counts to sweep (the N axis of the bound study).
    pub shots: Vec<usize>,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    /// Evaluated target users per seed.
    pub targets_per_seed: usize,
    /// Restrict targets to one ground-truth group (synthetic data).
    pub target_group: Option<usize>,
    /// Run the baseline alongside FSL (k-sweep case).
    pub baseline: bool,
    pub clustering: ClusterConfig,
    pub train: TrainConfig,
    pub metric: MetricConvention,
    /// Ensemble grid for the compactness case; `None` uses the default
    /// five-configuration suite there and the configured ensemble elsewhere.
    pub ensembles: Option<Vec<EnsembleSpec>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case: CaseKind::KSweep,
            dataset: DatasetSource::Synthetic(SynthConfig::default()),
            granularities: vec![1],
            shots: vec![12, 24, 48, 96, 192],
            horizon: crate::series::HORIZON,
            seeds: vec![0],
            targets_per_seed: 4,
            target_group: None,
            baseline: true,
            clustering: ClusterConfig::default(),
            train: TrainConfig::default(),
            metric: MetricConvention::Rmse,
            ensembles: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("config parse failed: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("config serialization failed: {e}")))
    }

    pub fn methods(&self) -> Vec<Method> {
        match self.case {
            CaseKind::KSweep => {
                if self.baseline {
                    vec![Method::Fsl, Method::Baseline]
                } else {
                    vec![Method::Fsl]
                }
            }
            CaseKind::Granularity | CaseKind::Compactness => vec![Method::Fsl],
        }
    }

    pub fn ensemble_grid(&self) -> Vec<EnsembleSpec> {
        match (&self.ensembles, self.case) {
            (Some(list), _) => list.clone(),
            (None, CaseKind::Compactness) => EnsembleSpec::compactness_suite(),
            (None, _) => vec![EnsembleSpec {
                name: "ensemble".to_string(),
                algorithms: self.clustering.algorithms.clone(),
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots.is_empty() {
            return Err(Error::invalid("shots list is empty"));
        }
        if self.shots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("shots must be strictly ascending"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds list is empty"));
        }
        if self.targets_per_seed == 0 {
            return Err(Error::invalid("targets_per_seed must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        if self.granularities.is_empty() {
            return Err(Error::invalid("granularities list is empty"));
        }
        Ok(())
    }

    /// Apply `key=value` overrides with dotted paths into the JSON form.
    /// Unknown keys and type mismatches are rejected.
    pub fn apply_overrides(&self, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
        let mut value: serde_json::Value = serde_json::from_str(&self.to_json()?)
            .map_err(|e| Error::Internal(format!("config reserialization failed: {e}")))?;
        for (key, raw) in overrides {
            let parts: Vec<&str> = key.split('.').collect();
            let (last, path) = parts.split_last().unwrap();
            let mut cursor = &mut value;
            for part in path {
                cursor = cursor
                    .as_object_mut()
                    .and_then(|o| o.get_mut(*part))
                    .ok_or_else(|| {
                        Error::invalid(format!("override {key:?}: unknown key {part:?}"))
                    })?;
            }
            let entry = cursor
                .as_object_mut()
                .and_then(|o| o.get_mut(*last))
                .ok_or_else(|| Error::invalid(format!("override {key:?}: unknown key {last:?}")))?;
            let parsed: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
            let compatible = std::mem::discriminant(entry) == std::mem::discriminant(&parsed)
                || entry.is_null();
            if !compatible {
                return Err(Error::invalid(format!(
                    "override {key:?}: expected a {} value",
                    json_type(entry)
                )));
            }
            *entry = parsed;
        }
        let text = serde_json::to_string(&value)
            .map_err(|e| Error::Internal(format!("override reserialization failed: {e}")))?;
        ExperimentConfig::from_json(&text)
    }
}

fn json_type(v: &serde_json::Value) -> &'static str {
    match v {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "boolean",
        serde_json::Value::Number(_) => "number",
        serde_json::Value::String(_) => "string",
        serde_json::Value::Array(_) => "array",
        serde_json::Value::Object(_) => "object",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let config = ExperimentConfig::default();
        let json = config.to_json().unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(back.shots, config.shots);
        assert_eq!(back.horizon, 72);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_json("{\"nope\": 1}").unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn overrides_apply_with_type_checking() {
        let config = ExperimentConfig::default();
        let updated = config
            .apply_overrides(&[
                ("horizon".to_string(), "36".to_string()),
                ("train.hidden_size".to_string(), "8".to_string()),
            ])
            .unwrap();
        assert_eq!(updated.horizon, 36);
        assert_eq!(updated.train.hidden_size, 8);

        let err = config
            .apply_overrides(&[("horizon".to_string(), "\"abc\"".to_string())])
            .unwrap_err();
        assert!(err.to_string().contains("number"), "{err}");
        let err = config
            .apply_overrides(&[("no.such.key".to_string(), "1".to_string())])
            .unwrap_err();
        assert!(err.to_string().contains("unknown key"));
    }

    #[test]
    fn validation_catches_bad_grids() {
        let mut config = ExperimentConfig::default();
        config.shots = vec![24, 12];
        assert!(config.validate().is_err());
        config.shots = vec![12];
        config.seeds.clear();
        assert!(config.validate().is_err());
    }

    #[test]
    fn compactness_suite_has_five_configurations() {
        let mut config = ExperimentConfig::default();
        config.case = CaseKind::Compactness;
        let grid = config.ensemble_grid();
        assert_eq!(grid.len(), 5);
        assert_eq!(grid[4].name, "ensemble");
        assert_eq!(grid[4].algorithms.len(), 4);
    }
}
