//! `fslcast` — few-shot load forecasting from the command line.
//!
//! Subcommands cover the pipeline stages: `synth` writes a synthetic
//! dataset, `features` exports descriptor vectors, `cluster` runs the
//! consensus ensemble, `forecast` evaluates one few-shot cell, and
//! `experiment` drives a full configured sweep. All randomness derives from
//! `--seed`; identical invocations are bit-reproducible.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fslcast::Error;

#[derive(Parser)]
#[command(
    name = "fslcast",
    version,
    about = "Few-shot load forecasting with consensus clustering and a two-phase LSTM",
    after_help = "Set FSL_LOG=debug|info|warn for log output."
)]
pub struct Cli {
    /// JSON experiment config (required by `experiment`)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory; no command writes outside it
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Global random seed; every stage seed derives from it
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Cap on parallel experiment cells (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Use the literal printed error metric (mean absolute error) and the
    /// literal entropy ratio orientation
    #[arg(long, global = true, default_value_t = false)]
    pub strict_paper: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate the synthetic clustered-sinusoid dataset as CSV
    Synth(commands::SynthArgs),
    /// Export one feature vector per user as CSV
    Features(commands::FeaturesArgs),
    /// Consensus-cluster user windows; writes labels CSV plus a JSON sidecar
    Cluster(commands::ClusterArgs),
    /// Run one few-shot forecasting cell end to end and print its error
    Forecast(commands::ForecastArgs),
    /// Run a configured experiment case and emit result tables
    Experiment(commands::ExperimentArgs),
}

/// Exit codes: 2 = config error, 3 = data error, 4 = numeric failure.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidArgument(_)) => 2,
        Some(Error::Data(_)) | Some(Error::Io(_)) => 3,
        Some(
            Error::DegenerateSeries(_)
            | Error::UndefinedEntropy(_)
            | Error::DivergedForecast(_)
            | Error::Internal(_),
        ) => 4,
        None => 2,
    }
}

fn category_for(code: u8) -> &'static str {
    match code {
        2 => "config",
        3 => "data",
        _ => "numeric",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FSL_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            log::warn!("could not set the worker pool size: {e}");
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code_for(&err);
            let msg = err.to_string().replace('\n', " ");
            eprintln!("error: {}: {}", category_for(code), msg);
            ExitCode::from(code)
        }
    }
}
