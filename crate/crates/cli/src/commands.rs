use std::ffi::OsString;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use clap::Parser;
use fairbot::bot::GaussianLaw;
use fairbot::matstat::{RngStream, SymMatrix};
use fairbot::report::{histogram_csv, histogram_svg, report_json, RunManifest};
use fairbot::scenarios::{
    alternating_covariance, ar1_covariance, bias_vector, level_study, power_curve, run_experiment,
    RejectionRates, ScenarioConfig, SweepParameter,
};
use fairbot::uniformity::BotSeries;
use fairbot::verifydata::{
    bias_diagnostics, load_dataset, run_verification, save_dataset, synth_dataset_with_obs,
    DataFormat, Holdout, MemberSelection, VerifyMode, VerifyPlan,
};
use serde::Serialize;
use serde_json::json;

use crate::{
    Cli, Command, CovKind, Format, LevelArgs, Mode, PowerArgs, ReplayArgs, Selection, SimulateArgs,
    Sweep, SynthArgs, VerifyArgs,
};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<fairbot::Error> for CliError {
    fn from(e: fairbot::Error) -> Self {
        CliError {
            code: if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_CONFIG
            },
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn dispatch(cli: Cli, args: Vec<OsString>) -> CliResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))?;
    let args: Vec<String> = args
        .into_iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    pool.install(|| run(cli.command, args))
}

fn run(command: Command, args: Vec<String>) -> CliResult {
    match command {
        Command::Simulate(a) => simulate(a, args),
        Command::Level(a) => level(a, args),
        Command::Power(a) => power(a, args),
        Command::Verify(a) => verify(a, args),
        Command::Synth(a) => synth(a, args),
        Command::Replay(a) => replay(a),
    }
}

fn manifest(
    subcommand: &str,
    args: Vec<String>,
    config: &impl Serialize,
    seed: u64,
) -> RunManifest {
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        args: strip_global(args),
        config: json!(config),
        root_seed: seed,
        rng: RngStream::ALGORITHM_ID.to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    }
}

/// Drops `--jobs`, which never affects results.
fn strip_global(args: Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut iter = args.into_iter();
    while let Some(a) = iter.next() {
        if a == "--jobs" {
            iter.next();
        } else if !a.starts_with("--jobs=") {
            out.push(a);
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    std::fs::write(path, contents)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, doc: &serde_json::Value) -> CliResult {
    let mut text = serde_json::to_string_pretty(doc).expect("report serializes");
    text.push('\n');
    write_file(path, &text)
}

fn write_extras(
    manifest: &RunManifest,
    series: &[BotSeries],
    csv: Option<&Path>,
    svg: Option<&Path>,
) -> CliResult {
    if let Some(path) = csv {
        write_file(path, &histogram_csv(manifest, series))?;
    }
    if let Some(path) = svg {
        write_file(path, &histogram_svg(series))?;
    }
    Ok(())
}

fn scenario_config(a: &SimulateArgs) -> CliResult<ScenarioConfig> {
    let mut cfg = ScenarioConfig::preset(&a.scenario, a.p, a.n)?;
    if let Some(v) = a.sigma_f_sq {
        cfg.sigma_f_sq = v;
    }
    if let Some(v) = a.rho_f {
        cfg.rho_f = v;
    }
    if let Some(v) = a.sigma_delta_sq {
        cfg.sigma_delta_sq = v;
    }
    if let Some(v) = a.rho_delta {
        cfg.rho_delta = v;
    }
    if let Some(v) = a.bias_alpha {
        cfg.bias_alpha = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(a: SimulateArgs, args: Vec<String>) -> CliResult {
    let cfg = scenario_config(&a)?;
    let report = run_experiment(&cfg, a.cases, a.seed, a.bins)?;
    let m = manifest("simulate", args, &a, a.seed);
    let config = json!({
        "scenario": a.scenario,
        "parameters": cfg,
        "cases": a.cases,
        "bins": a.bins,
        "seed": a.seed,
    });
    write_json(
        &a.out,
        &report_json(&m, &config, &report.series, a.emit_values, None),
    )?;
    write_extras(
        &m,
        &report.series,
        a.histogram_csv.as_deref(),
        a.svg.as_deref(),
    )
}

fn rate_rows(out: &mut String, prefix: &str, rates: &RejectionRates) {
    for (variant, rate) in &rates.rates {
        writeln!(out, "{prefix},{variant},{rate}").expect("writing to a String");
    }
}

fn level(a: LevelArgs, args: Vec<String>) -> CliResult {
    let rows = level_study(&a.p_list, &a.n_list, a.cases, a.reps, a.level, a.seed)?;
    let m = manifest("level", args, &a, a.seed);
    let mut out = m.comment_line();
    out.push_str("\np,n,variant,rejection_rate\n");
    for row in &rows {
        rate_rows(&mut out, &format!("{},{}", row.p, row.n), &row.rates);
    }
    write_file(&a.out, &out)
}

fn power(a: PowerArgs, args: Vec<String>) -> CliResult {
    let parameter = match a.sweep {
        Sweep::SigmaFSq => SweepParameter::SigmaFSq,
        Sweep::RhoF => SweepParameter::RhoF,
    };
    let grid = a.grid.clone().unwrap_or_else(|| parameter.default_grid());
    let base = ScenarioConfig::preset(&a.scenario, a.p, a.n)?;
    let curve = power_curve(&base, parameter, &grid, a.cases, a.reps, a.level, a.seed)?;
    let m = manifest("power", args, &a, a.seed);
    let mut out = m.comment_line();
    out.push_str("\nparameter,value,variant,rejection_rate\n");
    for point in &curve.points {
        rate_rows(
            &mut out,
            &format!("{parameter},{}", point.value),
            &point.rates,
        );
    }
    write_file(&a.out, &out)
}

fn verify(a: VerifyArgs, args: Vec<String>) -> CliResult {
    let format = match a.format {
        Some(Format::Jsonl) => DataFormat::Jsonl,
        Some(Format::Csv) => DataFormat::Csv,
        None => DataFormat::from_path(&a.input),
    };
    let dataset = load_dataset(&a.input, format)?;
    let plan = VerifyPlan {
        mode: match a.mode {
            Mode::PerfectReliability => VerifyMode::PerfectReliability,
            Mode::AgainstObservation => VerifyMode::AgainstObservation,
        },
        n_sub: a.n_sub,
        member_selection: match a.selection {
            Selection::FirstN => MemberSelection::FirstN,
            Selection::Random => MemberSelection::Random,
        },
        holdout: a.holdout.parse::<Holdout>()?,
        seed: a.seed,
    };
    let report = run_verification(&dataset, &plan, a.bins)?;
    let bias = if dataset.cases().iter().all(|c| c.obs.is_some()) {
        json!(bias_diagnostics(&dataset)?)
    } else {
        serde_json::Value::Null
    };
    let m = manifest("verify", args, &a, a.seed);
    let config = json!({
        "plan": plan,
        "input": a.input,
        "cases": dataset.len(),
        "dim": dataset.dim(),
        "members": dataset.n_members(),
        "bins": a.bins,
    });
    let doc = report_json(
        &m,
        &config,
        &report.series,
        a.emit_values,
        Some(("bias", bias)),
    );
    write_json(&a.out, &doc)?;
    write_extras(
        &m,
        &report.series,
        a.histogram_csv.as_deref(),
        a.svg.as_deref(),
    )
}

fn synth_covariance(a: &SynthArgs) -> CliResult<SymMatrix> {
    let cov = match a.cov {
        CovKind::Identity => {
            if a.p == 0 {
                return Err(CliError::config("p must be at least 1"));
            }
            SymMatrix::identity(a.p)
        }
        CovKind::Ar1 => ar1_covariance(a.p, a.sigma_sq, a.rho)?,
        CovKind::Alt => {
            alternating_covariance(a.p, a.sigma_sq, a.rho, a.sigma_delta_sq, a.rho_delta)?
        }
    };
    Ok(cov)
}

fn synth(a: SynthArgs, args: Vec<String>) -> CliResult {
    if a.members < 2 {
        return Err(CliError::config(format!(
            "need at least 2 members per case, got {}",
            a.members
        )));
    }
    let cov = synth_covariance(&a)?;
    let law = GaussianLaw::new(vec![0.0; a.p], cov.clone())?;
    let member_law = match a.bias_axis {
        Some(axis) => law.with_mean(bias_vector(&cov, axis, a.bias_sign, a.bias_alpha)?)?,
        None => law.clone(),
    };
    let obs_mean: Vec<f64> = (0..a.p)
        .map(|k| a.obs_shift * cov.get(k, k).sqrt())
        .collect();
    let obs_law = law.with_mean(obs_mean)?;
    let dataset = synth_dataset_with_obs(&member_law, &obs_law, a.cases, a.members, a.seed)?;
    let m = manifest("synth", args, &a, a.seed);
    let format = match a.format {
        Format::Jsonl => DataFormat::Jsonl,
        Format::Csv => DataFormat::Csv,
    };
    save_dataset(&a.out, &dataset, format, Some(&json!(m)))?;
    Ok(())
}

/// Output flags other than `--out` are dropped so a replay never overwrites
/// the original side files.
fn replay_args(recorded: &[String], out: &Path) -> Vec<String> {
    const SIDE_FILES: [&str; 2] = ["--histogram-csv", "--svg"];
    let mut args = Vec::with_capacity(recorded.len());
    let mut iter = recorded.iter();
    while let Some(a) = iter.next() {
        let flag = a.split('=').next().unwrap_or(a);
        if flag == "--out" || SIDE_FILES.contains(&flag) {
            if !a.contains('=') {
                iter.next();
            }
            continue;
        }
        args.push(a.clone());
    }
    args.push("--out".into());
    args.push(out.display().to_string());
    args
}

fn replay(a: ReplayArgs) -> CliResult {
    let text = std::fs::read_to_string(&a.from)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", a.from.display())))?;
    let recorded = RunManifest::extract(&text)
        .ok_or_else(|| CliError::config(format!("{} carries no manifest", a.from.display())))?;
    let args = replay_args(&recorded.args, &a.out);
    let cli = Cli::try_parse_from(std::iter::once("fairbot".to_string()).chain(args.clone()))
        .map_err(|e| CliError::config(format!("recorded arguments no longer parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::config("manifest records a replay"));
    }
    run(cli.command, args)
}
