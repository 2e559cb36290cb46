use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;

/// Calibration checks for multivariate Gaussian ensemble forecasts.
#[derive(Debug, Parser)]
#[command(name = "fairbot", version, about)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "FAIRBOT_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and write a report of all four transforms.
    Simulate(SimulateArgs),
    /// KS rejection rates of calibrated forecasts over a (p, n) grid.
    Level(LevelArgs),
    /// KS rejection rates along a grid of forecast variances or correlations.
    Power(PowerArgs),
    /// Evaluate the sample transforms on an ensemble dataset.
    Verify(VerifyArgs),
    /// Write a synthetic Gaussian ensemble dataset.
    Synth(SynthArgs),
    /// Re-run the command recorded in an output file's manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value = "calibrated")]
    scenario: String,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    cases: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Override the scenario's forecast variance.
    #[arg(long)]
    sigma_f_sq: Option<f64>,
    /// Override the scenario's forecast lag-1 correlation.
    #[arg(long)]
    rho_f: Option<f64>,
    #[arg(long)]
    sigma_delta_sq: Option<f64>,
    #[arg(long)]
    rho_delta: Option<f64>,
    #[arg(long)]
    bias_alpha: Option<f64>,
    /// Include every per-case value in the report.
    #[arg(long)]
    emit_values: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-variant histogram counts as CSV.
    #[arg(long)]
    histogram_csv: Option<PathBuf>,
    /// Also write the histograms as an SVG panel.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct LevelArgs {
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    p_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 2000)]
    cases: usize,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Sweep {
    #[value(name = "sigma_f_sq")]
    SigmaFSq,
    #[value(name = "rho_f")]
    RhoF,
}

#[derive(Debug, Args, Serialize)]
struct PowerArgs {
    #[arg(long, value_enum)]
    sweep: Sweep,
    /// Comma-separated sweep values; defaults to eight evenly spaced points.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    grid: Option<Vec<f64>>,
    /// Base scenario; must have an AR(1) forecast.
    #[arg(long, default_value = "calibrated")]
    scenario: String,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 2000)]
    cases: usize,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    PerfectReliability,
    AgainstObservation,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Selection {
    FirstN,
    Random,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_enum, default_value = "perfect-reliability")]
    mode: Mode,
    #[arg(long)]
    n_sub: usize,
    /// Member index used as the observation, or `random` for one per case.
    #[arg(long, default_value = "0")]
    holdout: String,
    #[arg(long, value_enum, default_value = "first-n")]
    selection: Selection,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long)]
    emit_values: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    histogram_csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CovKind {
    Identity,
    Ar1,
    Alt,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    members: usize,
    #[arg(long)]
    cases: usize,
    #[arg(long, value_enum, default_value = "ar1")]
    cov: CovKind,
    /// Marginal variance of the `ar1` and `alt` covariances.
    #[arg(long, default_value_t = 1.0)]
    sigma_sq: f64,
    #[arg(long, default_value_t = 0.6)]
    rho: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma_delta_sq: f64,
    #[arg(long, default_value_t = 0.0)]
    rho_delta: f64,
    /// Shift the member mean along this principal axis of the covariance.
    #[arg(long)]
    bias_axis: Option<usize>,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    bias_sign: i8,
    #[arg(long, default_value_t = 0.15)]
    bias_alpha: f64,
    /// Shift the observation mean by this many marginal standard deviations
    /// in every coordinate.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    obs_shift: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Any file written by this tool.
    #[arg(long)]
    from: PathBuf,
    /// Where to write the regenerated main output.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args: Vec<OsString> = std::env::args_os().skip(1).collect();
    match commands::dispatch(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
