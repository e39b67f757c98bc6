//! Subcommand implementations.

use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::Args;

use fslcast::clustering::{consensus_over_matrix, ClusterConfig, ConsensusSidecar};
use fslcast::data::{load_csv, save_csv, synth_generate, CsvSchema, Dataset, SynthConfig, TimeMode};
use fslcast::experiment::{
    run_cell, run_experiment, write_results, CellSpec, ExperimentConfig, Method,
};
use fslcast::features::{assemble_matrix, extract_features, write_features_csv, FeatureConfig};
use fslcast::forecaster::TrainConfig;
use fslcast::metrics::MetricConvention;
use fslcast::series::slice_window;
use fslcast::wavelet::WaveletKind;
use fslcast::Error;

use crate::{Cli, Command};

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(args) => cmd_synth(cli, args),
        Command::Features(args) => cmd_features(cli, args),
        Command::Cluster(args) => cmd_cluster(cli, args),
        Command::Forecast(args) => cmd_forecast(cli, args),
        Command::Experiment(args) => cmd_experiment(cli, args),
    }
}

fn ensure_out(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    Ok(())
}

fn parse_wavelet(name: &str) -> Result<WaveletKind> {
    match name {
        "haar" => Ok(WaveletKind::Haar),
        "db2" => Ok(WaveletKind::Db2),
        "db4" => Ok(WaveletKind::Db4),
        other => Err(anyhow!(Error::invalid(format!(
            "unknown wavelet {other:?} (expected haar, db2, or db4)"
        )))),
    }
}

/// Schema flags shared by every CSV-consuming subcommand.
#[derive(Args, Debug)]
pub struct SchemaArgs {
    /// Input dataset CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Column holding the user identifier
    #[arg(long, default_value = "user_id")]
    pub user_column: String,
    /// Column holding the integer time value
    #[arg(long, default_value = "timestamp")]
    pub time_column: String,
    /// Column holding the load value
    #[arg(long, default_value = "value")]
    pub value_column: String,
    /// Interpret the time column as epoch seconds instead of sample indices
    #[arg(long, default_value_t = false)]
    pub epoch_seconds: bool,
    /// Minutes per sample (sample-index mode)
    #[arg(long, default_value_t = 1)]
    pub granularity: u32,
}

impl SchemaArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            user_column: self.user_column.clone(),
            time_column: self.time_column.clone(),
            value_column: self.value_column.clone(),
            time_mode: if self.epoch_seconds {
                TimeMode::EpochSeconds
            } else {
                TimeMode::SampleIndex
            },
            granularity_minutes: self.granularity,
            window: None,
        }
    }

    fn load(&self) -> Result<Dataset> {
        Ok(load_csv(&self.input, &self.schema())?)
    }
}

/// Feature-extraction flags shared by `features`, `cluster`, `forecast`.
#[derive(Args, Debug)]
pub struct FeatureArgs {
    /// Wavelet family for the packet descriptors (haar, db2, db4)
    #[arg(long, default_value = "db4")]
    pub wavelet: String,
    /// Seasonal period of the decomposition, in samples
    #[arg(long, default_value_t = 24)]
    pub stl_period: usize,
}

impl FeatureArgs {
    fn config(&self, strict_paper: bool) -> Result<FeatureConfig> {
        Ok(FeatureConfig {
            wavelet: parse_wavelet(&self.wavelet)?,
            stl_period: self.stl_period,
            strict_entropy: strict_paper,
            ..FeatureConfig::default()
        })
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Users per period group
    #[arg(long, default_value_t = 20)]
    pub users: usize,
    /// Group periods in samples, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 15, 20])]
    pub periods: Vec<usize>,
    /// Gaussian noise standard deviation
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Sinusoid amplitude
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Samples per user
    #[arg(long, default_value_t = 500)]
    pub length: usize,
    /// Output file name inside --out
    #[arg(long, default_value = "synth.csv")]
    pub name: String,
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    ensure_out(cli)?;
    let dataset = synth_generate(&SynthConfig {
        users_per_group: args.users,
        periods: args.periods.clone(),
        amplitude: args.amplitude,
        noise_sigma: args.sigma,
        length: args.length,
        seed: cli.seed,
    })?;
    let path = cli.out.join(&args.name);
    let file = fs::File::create(&path)?;
    save_csv(file, &dataset)?;
    println!("wrote {} ({} users)", path.display(), dataset.series.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Output file name inside --out
    #[arg(long, default_value = "features.csv")]
    pub name: String,
}

fn cmd_features(cli: &Cli, args: &FeaturesArgs) -> Result<()> {
    ensure_out(cli)?;
    let dataset = args.schema.load()?;
    let config = args.features.config(cli.strict_paper)?;
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for series in &dataset.series {
        ids.push(series.user_id.clone());
        vectors.push(extract_features(series, &config)?);
    }
    let path = cli.out.join(&args.name);
    write_features_csv(fs::File::create(&path)?, &ids, &vectors)?;
    println!("wrote {} ({} rows)", path.display(), ids.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Start of the clustering window (sample index)
    #[arg(long, default_value_t = 0)]
    pub window_start: i64,
    /// Length of the clustering window; defaults to the common covered span
    #[arg(long)]
    pub window_len: Option<usize>,
    /// Base name for the label CSV and JSON sidecar inside --out
    #[arg(long, default_value = "consensus")]
    pub name: String,
}

fn cmd_cluster(cli: &Cli, args: &ClusterArgs) -> Result<()> {
    ensure_out(cli)?;
    let dataset = args.schema.load()?;
    let (common_start, common_end) = dataset
        .common_window()
        .ok_or_else(|| Error::data("series share no common index window"))?;
    let window_len = args
        .window_len
        .unwrap_or((common_end - common_start.max(args.window_start)) as usize);

    let feature_config = args.features.config(cli.strict_paper)?;
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for series in &dataset.series {
        let offset = args.window_start - series.start_index;
        if offset < 0 {
            return Err(anyhow!(Error::data(format!(
                "user {} starts after the clustering window",
                series.user_id
            ))));
        }
        let window = slice_window(series, offset as usize, window_len)?;
        ids.push(series.user_id.clone());
        vectors.push(extract_features(&window, &feature_config)?);
    }
    let (matrix, _) = assemble_matrix(&mut vectors, &feature_config)?;
    let cluster_config = ClusterConfig {
        features: feature_config,
        seed: cli.seed,
        ..ClusterConfig::default()
    };
    let (consensus, chosen_k) = consensus_over_matrix(&matrix, &cluster_config)?;

    let labels_path = cli.out.join(format!("{}_labels.csv", args.name));
    fslcast::clustering::write_labels_csv(
        fs::File::create(&labels_path)?,
        &ids,
        &consensus.final_labeling,
    )?;
    let sidecar = ConsensusSidecar {
        s_score: consensus.s_score,
        chosen_k,
        query_cluster: None,
        base_labels: consensus
            .base
            .iter()
            .map(|l| (l.algorithm.clone(), l.labels.clone()))
            .collect(),
    };
    let json_path = cli.out.join(format!("{}.json", args.name));
    fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
    println!(
        "wrote {} and {} (k = {}, s_score = {:.4})",
        labels_path.display(),
        json_path.display(),
        consensus.final_labeling.k,
        consensus.s_score
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Target user to forecast
    #[arg(long)]
    pub target: String,
    /// Shots available from the target
    #[arg(long, default_value_t = 12)]
    pub k: usize,
    /// `fsl` (cluster + pretrain + fine-tune) or `baseline`
    #[arg(long, default_value = "fsl")]
    pub method: String,
    /// Forecast horizon
    #[arg(long, default_value_t = 72)]
    pub horizon: usize,
    /// LSTM hidden size
    #[arg(long, default_value_t = 64)]
    pub hidden_size: usize,
    /// Output file name inside --out
    #[arg(long, default_value = "forecast.csv")]
    pub name: String,
}

fn cmd_forecast(cli: &Cli, args: &ForecastArgs) -> Result<()> {
    ensure_out(cli)?;
    let dataset = args.schema.load()?;
    let target_index = dataset
        .series
        .iter()
        .position(|s| s.user_id == args.target)
        .ok_or_else(|| Error::data(format!("no user {:?} in the dataset", args.target)))?;
    let method = match args.method.as_str() {
        "fsl" => Method::Fsl,
        "baseline" => Method::Baseline,
        other => {
            return Err(anyhow!(Error::invalid(format!(
                "unknown method {other:?} (expected fsl or baseline)"
            ))))
        }
    };
    let metric = if cli.strict_paper {
        MetricConvention::StrictPaper
    } else {
        MetricConvention::Rmse
    };
    let clustering = ClusterConfig {
        features: args.features.config(cli.strict_paper)?,
        seed: cli.seed,
        ..ClusterConfig::default()
    };
    let train = TrainConfig {
        hidden_size: args.hidden_size,
        ..TrainConfig::default()
    };
    let outcome = run_cell(&CellSpec {
        dataset: &dataset,
        target_index,
        k: args.k,
        horizon: args.horizon,
        method,
        cell_seed: cli.seed,
        clustering: &clustering,
        train: &train,
        metric,
    })?;

    let path = cli.out.join(&args.name);
    let mut w = csv::Writer::from_writer(fs::File::create(&path)?);
    w.write_record(["step", "truth", "forecast"])?;
    for (i, (t, f)) in outcome.truth.iter().zip(&outcome.forecast).enumerate() {
        w.write_record([&(i + 1).to_string(), &t.to_string(), &f.to_string()])?;
    }
    w.flush()?;
    println!("rmse {}", outcome.rmse);
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Dotted-path config overrides, e.g. --set train.hidden_size=32
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn cmd_experiment(cli: &Cli, args: &ExperimentArgs) -> Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::invalid("experiment requires --config"))?;
    let text = fs::read_to_string(config_path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if cli.strict_paper {
        config.metric = MetricConvention::StrictPaper;
        config.clustering.features.strict_entropy = true;
    }
    let overrides: Vec<(String, String)> = args
        .overrides
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| anyhow!(Error::invalid(format!("override {kv:?} is not KEY=VALUE"))))
        })
        .collect::<Result<_>>()?;
    if !overrides.is_empty() {
        config = config.apply_overrides(&overrides)?;
    }
    ensure_out(cli)?;
    let result = run_experiment(&config)?;
    let results_dir = cli.out.join("results");
    write_results(&result, &results_dir)?;
    println!(
        "wrote {} ({} cells, {} failed{})",
        results_dir.display(),
        result.cells.len(),
        result.failed_cells,
        result
            .query_accuracy
            .map(|a| format!(", query accuracy {a:.3}"))
            .unwrap_or_default()
    );
    Ok(())
}
