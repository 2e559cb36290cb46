//! Ensemble datasets on disk and the verification workflows run on them.
//!
//! Two formats are understood. JSON lines hold one case per line:
//!
//! ```text
//! {"case": "2024-01-01T00", "obs": [0.3, -1.2], "members": [[0.1, -0.9], [0.5, -1.4]]}
//! ```
//!
//! with `"obs": null` when no observation exists. A line holding a
//! `"manifest"` key is metadata and is skipped. The CSV form is long:
//! a `case,role,x1,…,xp` header, then one row per vector with role `obs` or
//! `m1 … mM`; lines starting with `#` are comments.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bot::{sample_bots, EnsembleCase, GaussianLaw, Variant};
use crate::error::{Error, Result};
use crate::matstat::RngStream;
use crate::scenarios::ExperimentReport;
use crate::uniformity::BotSeries;

/// One forecast case: an optional verifying vector and `M` member vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataCase {
    pub case: String,
    pub obs: Option<Vec<f64>>,
    pub members: Vec<Vec<f64>>,
}

/// Cases sharing one dimension `p ≥ 1` and one member count `M ≥ 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct VerificationDataset {
    dim: usize,
    n_members: usize,
    cases: Vec<DataCase>,
}

impl VerificationDataset {
    /// Validates shapes and finiteness. Shapes are fixed by the first case.
    pub fn new(cases: Vec<DataCase>) -> Result<Self> {
        let first = cases.first().ok_or(Error::EmptySample)?;
        let n_members = first.members.len();
        let dim = first.members.first().map_or(0, Vec::len);
        for c in &cases {
            let schema = |message: String| Error::Schema {
                case: c.case.clone(),
                message,
            };
            if c.members.len() != n_members {
                return Err(schema(format!(
                    "expected {n_members} members, found {}",
                    c.members.len()
                )));
            }
            if n_members < 2 {
                return Err(schema(format!(
                    "need at least 2 members, found {n_members}"
                )));
            }
            if dim == 0 {
                return Err(schema("vectors must have at least one component".into()));
            }
            for (j, m) in c.members.iter().enumerate() {
                if m.len() != dim {
                    return Err(schema(format!(
                        "member {} has length {}, expected {dim}",
                        j + 1,
                        m.len()
                    )));
                }
            }
            if let Some(obs) = &c.obs {
                if obs.len() != dim {
                    return Err(schema(format!(
                        "observation has length {}, expected {dim}",
                        obs.len()
                    )));
                }
            }
            let finite = c.members.iter().flatten().chain(c.obs.iter().flatten());
            if finite.into_iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteValue {
                    case: c.case.clone(),
                });
            }
        }
        Ok(VerificationDataset {
            dim,
            n_members,
            cases,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn cases(&self) -> &[DataCase] {
        &self.cases
    }

    pub fn into_cases(self) -> Vec<DataCase> {
        self.cases
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Guesses from the file extension; anything but `.csv` is JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DataFormat::Jsonl),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::domain(format!(
                "unknown format `{other}`; expected jsonl or csv"
            ))),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::Jsonl => "jsonl",
            DataFormat::Csv => "csv",
        })
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<VerificationDataset> {
    let file = File::open(path).map_err(io_error(path))?;
    let reader = BufReader::new(file);
    match format {
        DataFormat::Jsonl => read_jsonl(reader),
        DataFormat::Csv => read_csv(reader),
    }
}

/// Writes `dataset`, with `manifest` as a leading metadata line (JSON lines)
/// or `#` comment (CSV).
pub fn save_dataset(
    path: &Path,
    dataset: &VerificationDataset,
    format: DataFormat,
    manifest: Option<&serde_json::Value>,
) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = BufWriter::new(file);
    match format {
        DataFormat::Jsonl => write_jsonl(dataset, &mut w, manifest),
        DataFormat::Csv => {
            let comments: Vec<String> = manifest
                .map(|m| format!("manifest: {m}"))
                .into_iter()
                .collect();
            write_csv(dataset, &mut w, &comments)
        }
    }
    .and_then(|()| w.flush().map_err(io_error(path)))
    .map_err(|e| match e {
        Error::Io { source, .. } => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

fn stream_error(source: std::io::Error) -> Error {
    Error::Io {
        path: "<stream>".into(),
        source,
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<VerificationDataset> {
    let mut cases = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(stream_error)?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if value.get("manifest").is_some() {
            continue;
        }
        let case: DataCase = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        cases.push(case);
    }
    VerificationDataset::new(cases)
}

pub fn write_jsonl<W: Write>(
    dataset: &VerificationDataset,
    mut w: W,
    manifest: Option<&serde_json::Value>,
) -> Result<()> {
    if let Some(m) = manifest {
        writeln!(w, "{}", serde_json::json!({ "manifest": m })).map_err(stream_error)?;
    }
    for c in dataset.cases() {
        let line = serde_json::to_string(c).map_err(|e| Error::domain(e.to_string()))?;
        writeln!(w, "{line}").map_err(stream_error)?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<VerificationDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse {
        line: line as usize,
        message,
    };
    let header = rdr
        .headers()
        .map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    if header.len() < 3 || &header[0] != "case" || &header[1] != "role" {
        return Err(parse_err(1, "header must be `case,role,x1,...,xp`".into()));
    }
    let dim = header.len() - 2;

    // members are keyed by their 1-based index until the case is complete
    struct Partial {
        obs: Option<Vec<f64>>,
        members: Vec<(usize, Vec<f64>)>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut partial: HashMap<String, Partial> = HashMap::new();
    for record in rdr.records() {
        let record =
            record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 2 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", dim + 2, record.len()),
            ));
        }
        let case = record[0].to_string();
        let values = (2..record.len())
            .map(|k| {
                f64::from_str(&record[k])
                    .map_err(|e| parse_err(line, format!("field {}: {e}", k + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let entry = partial.entry(case.clone()).or_insert_with(|| {
            order.push(case.clone());
            Partial {
                obs: None,
                members: Vec::new(),
            }
        });
        match &record[1] {
            "obs" => {
                if entry.obs.replace(values).is_some() {
                    return Err(Error::Schema {
                        case,
                        message: "observation given twice".into(),
                    });
                }
            }
            role => {
                let index = role
                    .strip_prefix('m')
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| parse_err(line, format!("unknown role `{role}`")))?;
                entry.members.push((index, values));
            }
        }
    }
    let mut cases = Vec::with_capacity(order.len());
    for case in order {
        let mut p = partial.remove(&case).expect("case recorded in order");
        p.members.sort_by_key(|(k, _)| *k);
        if p.members.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
            return Err(Error::Schema {
                case,
                message: "member roles must be m1..mM without gaps or repeats".into(),
            });
        }
        cases.push(DataCase {
            case,
            obs: p.obs,
            members: p.members.into_iter().map(|(_, v)| v).collect(),
        });
    }
    VerificationDataset::new(cases)
}

pub fn write_csv<W: Write>(
    dataset: &VerificationDataset,
    mut w: W,
    comments: &[String],
) -> Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(w, "# {line}").map_err(stream_error)?;
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["case".to_string(), "role".to_string()];
    header.extend((1..=dataset.dim()).map(|k| format!("x{k}")));
    let csv_err = |e: csv::Error| Error::domain(e.to_string());
    out.write_record(&header).map_err(csv_err)?;
    for c in dataset.cases() {
        let rows = c.obs.iter().map(|o| ("obs".to_string(), o)).chain(
            c.members
                .iter()
                .enumerate()
                .map(|(j, m)| (format!("m{}", j + 1), m)),
        );
        for (role, values) in rows {
            let mut row = vec![c.case.clone(), role];
            // `{:?}` prints the shortest string that parses back to the same bits
            row.extend(values.iter().map(|x| format!("{x:?}")));
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush().map_err(stream_error)?;
    Ok(())
}

/// `n_cases` cases of `n_members` draws from `member_law` plus one
/// observation from `obs_law`. Case `i` uses stream `i` of `seed`.
pub fn synth_dataset_with_obs(
    member_law: &GaussianLaw,
    obs_law: &GaussianLaw,
    n_cases: usize,
    n_members: usize,
    seed: u64,
) -> Result<VerificationDataset> {
    if n_members < 2 {
        return Err(Error::TooFewMembers {
            have: n_members,
            need: 2,
        });
    }
    if member_law.dim() != obs_law.dim() {
        return Err(Error::DimensionMismatch {
            expected: member_law.dim(),
            found: obs_law.dim(),
        });
    }
    let cases = (0..n_cases as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = RngStream::for_case(seed, 0, i).generator();
            let members = (0..n_members).map(|_| member_law.sample(&mut g)).collect();
            let obs = obs_law.sample(&mut g);
            DataCase {
                case: format!("case-{i}"),
                obs: Some(obs),
                members,
            }
        })
        .collect();
    VerificationDataset::new(cases)
}

/// Calibrated synthetic data: members and observation share `law`.
pub fn synth_dataset(
    law: &GaussianLaw,
    n_cases: usize,
    n_members: usize,
    seed: u64,
) -> Result<VerificationDataset> {
    synth_dataset_with_obs(law, law, n_cases, n_members, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    /// One member stands in for the observation.
    PerfectReliability,
    AgainstObservation,
}

impl FromStr for VerifyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "perfect_reliability" => Ok(VerifyMode::PerfectReliability),
            "against_observation" => Ok(VerifyMode::AgainstObservation),
            _ => Err(Error::domain(format!(
                "unknown mode `{s}`; expected perfect-reliability or against-observation"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberSelection {
    FirstN,
    Random,
}

impl FromStr for MemberSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "first_n" => Ok(MemberSelection::FirstN),
            "random" => Ok(MemberSelection::Random),
            _ => Err(Error::domain(format!(
                "unknown member selection `{s}`; expected first-n or random"
            ))),
        }
    }
}

/// Which member plays the observation in perfect-reliability mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holdout {
    /// The same 0-based member index in every case.
    Index(usize),
    /// An index drawn independently per case.
    Random,
}

impl FromStr for Holdout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            return Ok(Holdout::Random);
        }
        s.parse::<usize>().map(Holdout::Index).map_err(|_| {
            Error::domain(format!(
                "holdout must be a member index or `random`, got `{s}`"
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyPlan {
    pub mode: VerifyMode,
    pub n_sub: usize,
    pub member_selection: MemberSelection,
    pub holdout: Holdout,
    pub seed: u64,
}

impl VerifyPlan {
    /// First `n_sub` members, holdout member 0.
    pub fn new(mode: VerifyMode, n_sub: usize) -> Self {
        VerifyPlan {
            mode,
            n_sub,
            member_selection: MemberSelection::FirstN,
            holdout: Holdout::Index(0),
            seed: 0,
        }
    }

    /// Checks the plan against a dataset's shape and contents.
    pub fn check(&self, dataset: &VerificationDataset) -> Result<()> {
        let p = dataset.dim();
        if self.n_sub <= p {
            return Err(Error::TooFewMembers {
                have: self.n_sub,
                need: p + 1,
            });
        }
        let m = dataset.n_members();
        match self.mode {
            VerifyMode::PerfectReliability => {
                if self.n_sub > m - 1 {
                    return Err(Error::SubsampleTooLarge {
                        n_sub: self.n_sub,
                        available: m - 1,
                    });
                }
                if let Holdout::Index(h) = self.holdout {
                    if h >= m {
                        return Err(Error::domain(format!(
                            "holdout index {h} out of range for {m} members"
                        )));
                    }
                }
            }
            VerifyMode::AgainstObservation => {
                if self.n_sub > m {
                    return Err(Error::SubsampleTooLarge {
                        n_sub: self.n_sub,
                        available: m,
                    });
                }
                if let Some(c) = dataset.cases().iter().find(|c| c.obs.is_none()) {
                    return Err(Error::MissingObservation {
                        case: c.case.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Pseudo-observation and subsample for case `index`.
fn select(plan: &VerifyPlan, case: &DataCase, index: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut g = RngStream::for_case(plan.seed, 0, index).generator();
    let m = case.members.len();
    let (obs, pool): (Vec<f64>, Vec<usize>) = match plan.mode {
        VerifyMode::PerfectReliability => {
            let h = match plan.holdout {
                Holdout::Index(h) => h,
                Holdout::Random => g.rng().random_range(0..m),
            };
            (
                case.members[h].clone(),
                (0..m).filter(|&j| j != h).collect(),
            )
        }
        VerifyMode::AgainstObservation => {
            (case.obs.clone().expect("checked by plan"), (0..m).collect())
        }
    };
    let chosen: Vec<usize> = match plan.member_selection {
        MemberSelection::FirstN => pool[..plan.n_sub].to_vec(),
        MemberSelection::Random => {
            let mut picked = rand::seq::index::sample(g.rng(), pool.len(), plan.n_sub).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|k| pool[k]).collect()
        }
    };
    let members = chosen
        .into_iter()
        .map(|j| case.members[j].clone())
        .collect();
    (obs, members)
}

/// Naive, adjusted and fair transform values for every case of `dataset`.
pub fn run_verification(
    dataset: &VerificationDataset,
    plan: &VerifyPlan,
    bins: usize,
) -> Result<ExperimentReport<VerifyPlan>> {
    plan.check(dataset)?;
    let rows = dataset
        .cases()
        .par_iter()
        .enumerate()
        .map(|(i, case)| {
            let (obs, members) = select(plan, case, i as u64);
            let [naive, adjusted, fair] = sample_bots(&EnsembleCase::new(obs, members)?)?;
            Ok([naive.u.value(), adjusted.u.value(), fair.u.value()])
        })
        .collect::<Result<Vec<_>>>()?;
    let series = Variant::SAMPLE
        .into_iter()
        .enumerate()
        .map(|(k, v)| BotSeries::from_values(v, rows.iter().map(|r| r[k]).collect(), bins))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: plan.clone(),
        n_cases: dataset.len(),
        seed: plan.seed,
        series,
    })
}

/// Ensemble-mean error normalized by ensemble spread, per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasDiagnostics {
    pub n_cases: usize,
    /// Mean over cases of `ensemble mean − obs`.
    pub mean_error: Vec<f64>,
    /// Mean over cases of the ensemble standard deviation (divisor `M − 1`).
    pub mean_spread: Vec<f64>,
    /// `mean_error / mean_spread`.
    pub normalized: Vec<f64>,
}

pub fn bias_diagnostics(dataset: &VerificationDataset) -> Result<BiasDiagnostics> {
    if dataset.is_empty() {
        return Err(Error::EmptySample);
    }
    let p = dataset.dim();
    let mut error = vec![0.0; p];
    let mut spread = vec![0.0; p];
    for c in dataset.cases() {
        let obs = c.obs.as_ref().ok_or_else(|| Error::MissingObservation {
            case: c.case.clone(),
        })?;
        let m = c.members.len() as f64;
        for k in 0..p {
            let mean = c.members.iter().map(|x| x[k]).sum::<f64>() / m;
            let var = c.members.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            error[k] += mean - obs[k];
            spread[k] += var.sqrt();
        }
    }
    let n = dataset.len() as f64;
    let mean_error: Vec<f64> = error.iter().map(|e| e / n).collect();
    let mean_spread: Vec<f64> = spread.iter().map(|s| s / n).collect();
    let normalized = mean_error
        .iter()
        .zip(&mean_spread)
        .map(|(e, s)| e / s)
        .collect();
    Ok(BiasDiagnostics {
        n_cases: dataset.len(),
        mean_error,
        mean_spread,
        normalized,
    })
}
