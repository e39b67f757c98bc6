//! End-to-end case runners: sweep the (ensemble x granularity x shots x
//! seeds x targets x method) grid, aggregate with outlier trimming, and emit
//! plot-ready CSV tables.

mod cell;
mod config;

pub use cell::{run_cell, CellOutcome, CellSpec};
pub use config::{CaseKind, DatasetSource, EnsembleSpec, ExperimentConfig, Method};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, synth_generate, Dataset};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::seed;
use crate::series::resample;

/// One evaluated grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub ensemble: String,
    pub granularity_minutes: u32,
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    pub user_id: String,
    pub rmse: Option<f64>,
    pub s_score: Option<f64>,
    pub query_correct: Option<bool>,
    pub error: Option<String>,
}

/// Trimmed aggregate over one (ensemble, granularity, method, k) group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub ensemble: String,
    pub granularity_minutes: u32,
    pub method: Method,
    pub k: usize,
    pub report: EvalReport,
    pub cells: usize,
    pub failed: usize,
}

/// Compactness summary for one ensemble configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SscoreRow {
    pub ensemble: String,
    /// Mean feature-space silhouette over all FSL cells.
    pub s_score: f64,
    /// Trimmed std of the pooled per-cell errors.
    pub pooled_trimmed_std: f64,
    pub pooled_trimmed_mrmse: f64,
}

/// Full sweep output; aggregates are recomputable from `cells`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub sscores: Vec<SscoreRow>,
    /// Fraction of FSL cells whose query landed in a majority-matching
    /// cluster (synthetic data only).
    pub query_accuracy: Option<f64>,
    pub failed_cells: usize,
}

struct PreparedCell {
    dataset_idx: usize,
    target_index: usize,
    ensemble_idx: usize,
    method: Method,
    k: usize,
    seed: u64,
    granularity: u32,
    cell_seed: u64,
}

fn base_dataset(config: &ExperimentConfig, run_seed: u64) -> Result<Dataset> {
    match &config.dataset {
        DatasetSource::Synthetic(synth) => {
            let mut synth = synth.clone();
            synth.seed = seed::derive(run_seed, "dataset", 0);
            synth_generate(&synth)
        }
        DatasetSource::Csv { path, schema } => load_csv(Path::new(path), schema),
    }
}

fn resample_dataset(dataset: &Dataset, granularity: u32) -> Result<Dataset> {
    if granularity == dataset.granularity_minutes {
        return Ok(dataset.clone());
    }
    if granularity % dataset.granularity_minutes != 0 {
        return Err(Error::invalid(format!(
            "granularity {granularity} not a multiple of the dataset's {}",
            dataset.granularity_minutes
        )));
    }
    let factor = (granularity / dataset.granularity_minutes) as usize;
    let series = dataset
        .series
        .iter()
        .map(|s| resample(s, factor))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        series,
        source: dataset.source.clone(),
        granularity_minutes: granularity,
        group_labels: dataset.group_labels.clone(),
    })
}

fn pick_targets(dataset: &Dataset, config: &ExperimentConfig, run_seed: u64) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = (0..dataset.series.len())
        .filter(|&i| match (config.target_group, &dataset.group_labels) {
            (Some(group), Some(labels)) => labels[i] == group,
            (Some(_), None) => false,
            (None, _) => true,
        })
        .collect();
    if eligible.len() < config.targets_per_seed {
        return Err(Error::invalid(format!(
            "only {} eligible targets, need {}",
            eligible.len(),
            config.targets_per_seed
        )));
    }
    let mut order = eligible;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(run_seed, "targets", 0));
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    order.truncate(config.targets_per_seed);
    Ok(order)
}

/// Run the configured sweep. Cells execute in parallel; each is internally
/// deterministic given its derived seed, and assembly is order-independent.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let ensembles = config.ensemble_grid();
    let methods = config.methods();

    // Materialize each (seed, granularity) dataset once.
    let mut datasets: Vec<Dataset> = Vec::new();
    let mut dataset_index: BTreeMap<(u64, u32), usize> = BTreeMap::new();
    let mut prepared: Vec<PreparedCell> = Vec::new();
    for &run_seed in &config.seeds {
        let base = base_dataset(config, run_seed)?;
        let targets = pick_targets(&base, config, run_seed)?;
        for &granularity in &config.granularities {
            let idx = match dataset_index.get(&(run_seed, granularity)) {
                Some(&idx) => idx,
                None => {
                    let ds = resample_dataset(&base, granularity)?;
                    datasets.push(ds);
                    dataset_index.insert((run_seed, granularity), datasets.len() - 1);
                    datasets.len() - 1
                }
            };
            for (ensemble_idx, ensemble) in ensembles.iter().enumerate() {
                for &k in &config.shots {
                    for &target_index in &targets {
                        let user_id = &datasets[idx].series[target_index].user_id;
                        let mut cell_seed = seed::derive(run_seed, user_id, 0);
                        cell_seed = seed::derive(cell_seed, "k", k as u64);
                        cell_seed = seed::derive(cell_seed, "granularity", granularity as u64);
                        cell_seed = seed::derive(cell_seed, &ensemble.name, 0);
                        for &method in &methods {
                            prepared.push(PreparedCell {
                                dataset_idx: idx,
                                target_index,
                                ensemble_idx,
                                method,
                                k,
                                seed: run_seed,
                                granularity,
                                cell_seed,
                            });
                        }
                    }
                }
            }
        }
    }

    let records: Vec<CellRecord> = prepared
        .par_iter()
        .map(|p| {
            let dataset = &datasets[p.dataset_idx];
            let ensemble = &ensembles[p.ensemble_idx];
            let mut clustering = config.clustering.clone();
            clustering.algorithms = ensemble.algorithms.clone();
            let spec = CellSpec {
                dataset,
                target_index: p.target_index,
                k: p.k,
                horizon: config.horizon,
                method: p.method,
                cell_seed: p.cell_seed,
                clustering: &clustering,
                train: &config.train,
                metric: config.metric,
            };
            let user_id = dataset.series[p.target_index].user_id.clone();
            match run_cell(&spec) {
                Ok(outcome) => CellRecord {
                    ensemble: ensemble.name.clone(),
                    granularity_minutes: p.granularity,
                    method: p.method,
                    k: p.k,
                    seed: p.seed,
                    user_id,
                    rmse: Some(outcome.rmse),
                    s_score: outcome.s_score,
                    query_correct: outcome.query_correct,
                    error: None,
                },
                Err(e) => CellRecord {
                    ensemble: ensemble.name.clone(),
                    granularity_minutes: p.granularity,
                    method: p.method,
                    k: p.k,
                    seed: p.seed,
                    user_id,
                    rmse: None,
                    s_score: None,
                    query_correct: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut cells = records;
    cells.sort_by(|a, b| {
        (
            &a.ensemble,
            a.granularity_minutes,
            a.method,
            a.k,
            a.seed,
            &a.user_id,
        )
            .cmp(&(
                &b.ensemble,
                b.granularity_minutes,
                b.method,
                b.k,
                b.seed,
                &b.user_id,
            ))
    });

    let aggregates = aggregate(&cells, config)?;
    let sscores = sscore_rows(&cells)?;
    let query_cells: Vec<bool> = cells.iter().filter_map(|c| c.query_correct).collect();
    let query_accuracy = (!query_cells.is_empty())
        .then(|| query_cells.iter().filter(|ok| **ok).count() as f64 / query_cells.len() as f64);
    let failed_cells = cells.iter().filter(|c| c.rmse.is_none()).count();

    Ok(ExperimentResult {
        config: config.clone(),
        cells,
        aggregates,
        sscores,
        query_accuracy,
        failed_cells,
    })
}

fn aggregate(cells: &[CellRecord], config: &ExperimentConfig) -> Result<Vec<AggregateRow>> {
    let mut groups: BTreeMap<(String, u32, String, usize), Vec<&CellRecord>> = BTreeMap::new();
    for cell in cells {
        groups
            .entry((
                cell.ensemble.clone(),
                cell.granularity_minutes,
                cell.method.name().to_string(),
                cell.k,
            ))
            .or_default()
            .push(cell);
    }
    let mut rows = Vec::new();
    for ((ensemble, granularity, _method_name, k), group) in groups {
        let errors: Vec<f64> = group.iter().filter_map(|c| c.rmse).collect();
        let failed = group.len() - errors.len();
        if errors.is_empty() {
            continue;
        }
        let report = EvalReport::from_errors(errors, config.metric)?;
        rows.push(AggregateRow {
            ensemble,
            granularity_minutes: granularity,
            method: group[0].method,
            k,
            report,
            cells: group.len(),
            failed,
        });
    }
    Ok(rows)
}

fn sscore_rows(cells: &[CellRecord]) -> Result<Vec<SscoreRow>> {
    let mut by_ensemble: BTreeMap<String, Vec<&CellRecord>> = BTreeMap::new();
    for cell in cells.iter().filter(|c| c.method == Method::Fsl) {
        by_ensemble.entry(cell.ensemble.clone()).or_default().push(cell);
    }
    let mut rows = Vec::new();
    for (ensemble, group) in by_ensemble {
        let scores: Vec<f64> = group.iter().filter_map(|c| c.s_score).collect();
        let errors: Vec<f64> = group.iter().filter_map(|c| c.rmse).collect();
        if scores.is_empty() || errors.len() < 2 {
            continue;
        }
        let s_score = scores.iter().sum::<f64>() / scores.len() as f64;
        let (pooled_mean, pooled_std, _) = crate::metrics::trim_outliers(&errors)?;
        rows.push(SscoreRow {
            ensemble,
            s_score,
            pooled_trimmed_std: pooled_std,
            pooled_trimmed_mrmse: pooled_mean,
        });
    }
    Ok(rows)
}

fn fmt_opt(v: &Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Emit `cells.csv`, `table.csv`, `curves.csv`, `sscore.csv`, `config.json`,
/// and `summary.json` under `dir`.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut cells = csv::Writer::from_writer(std::fs::File::create(dir.join("cells.csv"))?);
    cells
        .write_record([
            "ensemble",
            "granularity_minutes",
            "method",
            "k",
            "seed",
            "user_id",
            "rmse",
            "s_score",
            "query_correct",
            "error",
        ])
        .map_err(csv_err)?;
    for c in &result.cells {
        cells
            .write_record([
                c.ensemble.as_str(),
                &c.granularity_minutes.to_string(),
                c.method.name(),
                &c.k.to_string(),
                &c.seed.to_string(),
                c.user_id.as_str(),
                &fmt_opt(&c.rmse),
                &fmt_opt(&c.s_score),
                &c.query_correct.map(|b| b.to_string()).unwrap_or_default(),
                c.error.as_deref().unwrap_or(""),
            ])
            .map_err(csv_err)?;
    }
    cells.flush()?;

    // Table layout: one row per (ensemble, granularity, method), one
    // mean±std column per shot count.
    let shots = &result.config.shots;
    let mut table = csv::Writer::from_writer(std::fs::File::create(dir.join("table.csv"))?);
    let mut header = vec![
        "ensemble".to_string(),
        "granularity_minutes".to_string(),
        "method".to_string(),
        "convention".to_string(),
    ];
    header.extend(shots.iter().map(|k| format!("{k}shot")));
    table.write_record(&header).map_err(csv_err)?;
    let mut table_rows: BTreeMap<(String, u32, String), Vec<String>> = BTreeMap::new();
    for row in &result.aggregates {
        let key = (
            row.ensemble.clone(),
            row.granularity_minutes,
            row.method.name().to_string(),
        );
        let entry = table_rows
            .entry(key)
            .or_insert_with(|| vec![String::new(); shots.len()]);
        if let Some(pos) = shots.iter().position(|k| *k == row.k) {
            entry[pos] = row.report.cell();
        }
    }
    for ((ensemble, granularity, method), cols) in table_rows {
        let mut record = vec![
            ensemble,
            granularity.to_string(),
            method,
            result.config.metric.name().to_string(),
        ];
        record.extend(cols);
        table.write_record(&record).map_err(csv_err)?;
    }
    table.flush()?;

    let mut curves = csv::Writer::from_writer(std::fs::File::create(dir.join("curves.csv"))?);
    curves
        .write_record([
            "ensemble",
            "granularity_minutes",
            "method",
            "k",
            "trimmed_mrmse",
            "trimmed_std",
            "mrmse",
            "removed",
            "cells",
            "failed",
        ])
        .map_err(csv_err)?;
    for row in &result.aggregates {
        curves
            .write_record([
                row.ensemble.as_str(),
                &row.granularity_minutes.to_string(),
                row.method.name(),
                &row.k.to_string(),
                &row.report.trimmed_mrmse.to_string(),
                &row.report.trimmed_std.to_string(),
                &row.report.mrmse.to_string(),
                &row.report.removed_count.to_string(),
                &row.cells.to_string(),
                &row.failed.to_string(),
            ])
            .map_err(csv_err)?;
    }
    curves.flush()?;

    let mut sscore = csv::Writer::from_writer(std::fs::File::create(dir.join("sscore.csv"))?);
    sscore
        .write_record(["ensemble", "s_score", "pooled_trimmed_mrmse", "pooled_trimmed_std"])
        .map_err(csv_err)?;
    for row in &result.sscores {
        sscore
            .write_record([
                row.ensemble.as_str(),
                &row.s_score.to_string(),
                &row.pooled_trimmed_mrmse.to_string(),
                &row.pooled_trimmed_std.to_string(),
            ])
            .map_err(csv_err)?;
    }
    sscore.flush()?;

    std::fs::write(dir.join("config.json"), result.config.to_json()?)?;
    let summary = serde_json::json!({
        "convention": result.config.metric.name(),
        "failed_cells": result.failed_cells,
        "query_accuracy": result.query_accuracy,
        "total_cells": result.cells.len(),
    });
    let mut f = std::fs::File::create(dir.join("summary.json"))?;
    writeln!(f, "{}", serde_json::to_string_pretty(&summary).unwrap())?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv write failed: {e}"))
}

/// Case 1/2 structure: MRMSE versus shot count, FSL against the baseline.
pub fn run_case_k_sweep(config: &ExperimentConfig) -> Result<ExperimentResult> {
    expect_case(config, CaseKind::KSweep)?;
    run_experiment(config)
}

/// Case 3 structure: MRMSE versus shot count around the period bound.
pub fn run_case_granularity(config: &ExperimentConfig) -> Result<ExperimentResult> {
    expect_case(config, CaseKind::Granularity)?;
    run_experiment(config)
}

/// Case 4 structure: per-clusterer S-scores and error spread.
pub fn run_case_compactness(config: &ExperimentConfig) -> Result<ExperimentResult> {
    expect_case(config, CaseKind::Compactness)?;
    run_experiment(config)
}

fn expect_case(config: &ExperimentConfig, case: CaseKind) -> Result<()> {
    if config.case != case {
        return Err(Error::invalid(format!(
            "config case {:?} does not match the runner ({case:?})",
            config.case
        )));
    }
    Ok(())
}
