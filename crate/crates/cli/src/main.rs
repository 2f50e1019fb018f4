//! `swfdr`: extract reported P-values from abstracts, estimate the fraction
//! of false positives among them, and fit trends across journals and years.

mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "swfdr",
    version,
    about = "Estimate the false-positive fraction among reported significant P-values"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract P-value reports from a JSON-lines file of abstracts.
    Extract(ExtractArgs),
    /// Fit the mixture to a records CSV.
    Estimate(EstimateArgs),
    /// Simulate a records CSV from known parameters.
    Simulate(SimulateArgs),
    /// Fit a random-intercept trend to per-stratum estimates.
    Trend(TrendArgs),
    /// Theoretical false-positive fraction from prior, level and power.
    Ppv(PpvArgs),
}

#[derive(Debug, Args, serde::Serialize)]
pub struct ExtractArgs {
    /// Abstracts, one JSON object per line with id, journal, year, text.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Records CSV.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Diagnostics JSON [default: <output stem>.diagnostics.json].
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct EstimateArgs {
    /// Records CSV as written by `extract` or `simulate`.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Result JSON.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Bootstrap resamples for the standard deviation (0 disables).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, env = "SWFDR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also estimate per stratum. Only `journal,year` is supported.
    #[arg(long, value_parser = ["journal,year"])]
    pub by: Option<String>,
    /// Smallest stratum that is fitted.
    #[arg(long, default_value_t = swfdr_core::trend::DEFAULT_MIN_STRATUM_SIZE)]
    pub min_stratum: usize,
    /// Per-stratum estimates CSV (requires --by).
    #[arg(long, requires = "by")]
    pub strata_output: Option<PathBuf>,
    /// Histogram of reported values in 20 bins of width 0.0025.
    #[arg(long)]
    pub emit_hist: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub pi0: f64,
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, default_value_t = 25.0)]
    pub b: f64,
    #[arg(long, default_value_t = 0.0)]
    pub censor_frac: f64,
    #[arg(long, default_value_t = 0.0)]
    pub round_frac: f64,
    #[arg(long, value_enum, default_value_t = Censoring::SmallestCovering)]
    pub censoring: Censoring,
    #[arg(long, env = "SWFDR_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "simulated")]
    pub journal: String,
    #[arg(long, default_value_t = 2000)]
    pub year: i32,
    /// Records CSV.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Hidden values and component labels, one row per record.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Censoring {
    SmallestCovering,
    Independent,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct TrendArgs {
    /// Stratum estimates CSV, or a records CSV that is stratified first.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_parser = ["year", "submissions"], default_value = "year")]
    pub predictor: String,
    /// CSV with header journal,year,submissions.
    #[arg(long)]
    pub submissions: Option<PathBuf>,
    /// Trend fit JSON.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Stratum estimates CSV used in the fit.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[arg(long, default_value_t = swfdr_core::trend::DEFAULT_MIN_STRATUM_SIZE)]
    pub min_stratum: usize,
    /// Bootstrap resamples per stratum when starting from records.
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, env = "SWFDR_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct PpvArgs {
    /// Probability that a tested hypothesis is true.
    #[arg(long)]
    pub prior: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    pub power: f64,
    /// Also write the result to this file (with a manifest).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::data(format!("{}: {e}", path.display()))
    }
}

impl From<swfdr_core::Error> for CliError {
    fn from(e: swfdr_core::Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Extract(args) => commands::extract(&args),
        Command::Estimate(args) => commands::estimate(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Trend(args) => commands::trend(&args),
        Command::Ppv(args) => commands::ppv(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("swfdr: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
