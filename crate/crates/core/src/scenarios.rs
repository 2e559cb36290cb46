//! Truth/forecast pairs and the Monte Carlo experiments built on them.
//!
//! The truth is always `N_p(0, Σ₀)` with the AR(1) covariance
//! `σ₀² ρ₀^|k−ℓ|`. Forecasts differ from it in their covariance (AR(1) with
//! other parameters, or an alternating-error perturbation of `Σ₀`) or in
//! their mean (a shift onto a probability ellipsoid of the truth).
//!
//! Every case draws a fresh observation and a fresh ensemble from its own
//! [`RngStream`], so results do not depend on how work is scheduled.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bot::{bot_theoretical, sample_bots, EnsembleCase, GaussianLaw, Variant};
use crate::error::{Error, Result};
use crate::matstat::{cholesky, sym_eigen, RngStream, SymMatrix, CASE_STRIDE};
use crate::specialfn::chi2_quantile;
use crate::uniformity::{ks_test, BotSeries};

/// How the forecast law departs from the truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Calibrated,
    /// Wrong variance, right correlation.
    Type1,
    /// Right variance, wrong correlation.
    Type2,
    Mixed,
    AltVariance,
    AltCorrelation,
    Bias,
}

/// A miscalibration recipe. Only the fields relevant to `kind` are read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub p: usize,
    pub n: usize,
    pub sigma0_sq: f64,
    pub rho0: f64,
    pub kind: ScenarioKind,
    pub sigma_f_sq: f64,
    pub rho_f: f64,
    pub sigma_delta_sq: f64,
    pub rho_delta: f64,
    /// Principal axis (1-based) along which the forecast mean is shifted.
    pub bias_axis: usize,
    pub bias_sign: i8,
    pub bias_alpha: f64,
}

/// Names accepted by [`ScenarioConfig::preset`].
pub const PRESET_NAMES: [&str; 13] = [
    "calibrated",
    "type1-under",
    "type1-over",
    "type2-under",
    "type2-over",
    "mixed-under",
    "mixed-over",
    "alt-variance",
    "alt-correlation",
    "bias-a1p",
    "bias-a1m",
    "bias-a2p",
    "bias-a2m",
];

impl ScenarioConfig {
    /// Calibrated forecasts with `σ₀² = 1`, `ρ₀ = 0.6`.
    pub fn calibrated(p: usize, n: usize) -> Self {
        ScenarioConfig {
            p,
            n,
            sigma0_sq: 1.0,
            rho0: 0.6,
            kind: ScenarioKind::Calibrated,
            sigma_f_sq: 1.0,
            rho_f: 0.6,
            sigma_delta_sq: 0.0,
            rho_delta: 0.0,
            bias_axis: 1,
            bias_sign: 1,
            bias_alpha: 0.15,
        }
    }

    /// One of the named scenarios in [`PRESET_NAMES`].
    pub fn preset(name: &str, p: usize, n: usize) -> Result<Self> {
        let base = Self::calibrated(p, n);
        let ar1 = |kind, sigma_f_sq, rho_f| ScenarioConfig {
            kind,
            sigma_f_sq,
            rho_f,
            ..base.clone()
        };
        let bias = |axis, sign| ScenarioConfig {
            kind: ScenarioKind::Bias,
            bias_axis: axis,
            bias_sign: sign,
            ..base.clone()
        };
        let cfg = match name {
            "calibrated" => base.clone(),
            "type1-under" => ar1(ScenarioKind::Type1, 0.65, 0.6),
            "type1-over" => ar1(ScenarioKind::Type1, 1.35, 0.6),
            "type2-under" => ar1(ScenarioKind::Type2, 1.0, 0.45),
            "type2-over" => ar1(ScenarioKind::Type2, 1.0, 0.75),
            "mixed-under" => ar1(ScenarioKind::Mixed, 0.65, 0.45),
            "mixed-over" => ar1(ScenarioKind::Mixed, 1.35, 0.75),
            "alt-variance" => ScenarioConfig {
                kind: ScenarioKind::AltVariance,
                sigma_delta_sq: 0.35,
                rho_delta: 0.0,
                ..base.clone()
            },
            "alt-correlation" => ScenarioConfig {
                kind: ScenarioKind::AltCorrelation,
                sigma_delta_sq: 0.0,
                rho_delta: 0.15,
                ..base.clone()
            },
            "bias-a1p" => bias(1, 1),
            "bias-a1m" => bias(1, -1),
            "bias-a2p" => bias(2, 1),
            "bias-a2m" => bias(2, -1),
            other => {
                return Err(Error::domain(format!(
                    "unknown scenario `{other}`; expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Checks the parameters `kind` depends on.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::domain("dimension p must be at least 1"));
        }
        if self.n <= self.p {
            return Err(Error::domain(format!(
                "fair transform requires n > p (n = {}, p = {})",
                self.n, self.p
            )));
        }
        check_variance("sigma0_sq", self.sigma0_sq)?;
        check_correlation("rho0", self.rho0)?;
        match self.kind {
            ScenarioKind::Calibrated => {}
            ScenarioKind::Type1 | ScenarioKind::Type2 | ScenarioKind::Mixed => {
                check_variance("sigma_f_sq", self.sigma_f_sq)?;
                check_correlation("rho_f", self.rho_f)?;
            }
            ScenarioKind::AltVariance | ScenarioKind::AltCorrelation => {
                if !(self.sigma_delta_sq >= 0.0) || self.sigma_delta_sq >= self.sigma0_sq {
                    return Err(Error::domain(format!(
                        "sigma_delta_sq must lie in [0, sigma0_sq), got {}",
                        self.sigma_delta_sq
                    )));
                }
                check_correlation("rho0 - rho_delta", self.rho0 - self.rho_delta)?;
                check_correlation("rho0 + rho_delta", self.rho0 + self.rho_delta)?;
            }
            ScenarioKind::Bias => {
                if !(self.bias_axis == 1 || self.bias_axis == 2) || self.bias_axis > self.p {
                    return Err(Error::domain(format!(
                        "bias axis must be 1 or 2 and at most p, got {}",
                        self.bias_axis
                    )));
                }
                if self.bias_sign != 1 && self.bias_sign != -1 {
                    return Err(Error::domain("bias sign must be +1 or -1"));
                }
                if !(self.bias_alpha > 0.0 && self.bias_alpha < 1.0) {
                    return Err(Error::domain("bias alpha must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

fn check_variance(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {v}")))
    }
}

fn check_correlation(name: &str, r: f64) -> Result<()> {
    if r > -1.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must lie in (-1, 1), got {r}"
        )))
    }
}

/// `σ² ρ^|k−ℓ|`, the autocovariance of a stationary AR(1) process.
pub fn ar1_covariance(p: usize, sigma_sq: f64, rho: f64) -> Result<SymMatrix> {
    if p == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    check_variance("sigma_sq", sigma_sq)?;
    check_correlation("rho", rho)?;
    Ok(SymMatrix::from_fn(p, |k, l| {
        sigma_sq * rho.powi((k as i32 - l as i32).abs())
    }))
}

/// AR(1)-like covariance whose variances and lag correlations carry errors
/// of alternating sign: with 1-based `k, ℓ` and lag `d = |k − ℓ|`,
/// `√(σ₀² + (−1)^k σ_Δ²) √(σ₀² + (−1)^ℓ σ_Δ²) (ρ₀ + (−1)^d ρ_Δ)^d`.
pub fn alternating_covariance(
    p: usize,
    sigma0_sq: f64,
    rho0: f64,
    sigma_delta_sq: f64,
    rho_delta: f64,
) -> Result<SymMatrix> {
    if p == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    if !(sigma0_sq - sigma_delta_sq > 0.0) || !(sigma0_sq + sigma_delta_sq > 0.0) {
        return Err(Error::domain(format!(
            "alternating variances must stay positive (sigma0_sq = {sigma0_sq}, sigma_delta_sq = {sigma_delta_sq})"
        )));
    }
    let sign = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
    let sd: Vec<f64> = (1..=p)
        .map(|k| (sigma0_sq + sign(k) * sigma_delta_sq).sqrt())
        .collect();
    let cov = SymMatrix::from_fn(p, |k, l| {
        let lag = k.abs_diff(l);
        sd[k] * sd[l] * (rho0 + sign(lag) * rho_delta).powi(lag as i32)
    });
    cholesky(&cov)?;
    Ok(cov)
}

/// Mean shift of length `√Q_p(α)` along a principal axis of `truth_cov`:
/// `sign · √(χ²_p quantile(α)) · √λ_axis · e_axis`.
pub fn bias_vector(truth_cov: &SymMatrix, axis: usize, sign: i8, alpha: f64) -> Result<Vec<f64>> {
    let p = truth_cov.dim();
    if axis == 0 || axis > p {
        return Err(Error::domain(format!("axis {axis} out of range 1..={p}")));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::domain("sign must be +1 or -1"));
    }
    let spectral = sym_eigen(truth_cov)?;
    let radius = chi2_quantile(p, alpha)?.sqrt();
    let lambda = spectral.eigenvalues[axis - 1];
    let scale = f64::from(sign) * radius * lambda.sqrt();
    Ok(spectral.eigenvectors[axis - 1]
        .iter()
        .map(|e| scale * e)
        .collect())
}

/// The truth law and the forecast law described by `config`.
pub fn build_pair(config: &ScenarioConfig) -> Result<(GaussianLaw, GaussianLaw)> {
    config.validate()?;
    let p = config.p;
    let truth_cov = ar1_covariance(p, config.sigma0_sq, config.rho0)?;
    let truth = GaussianLaw::new(vec![0.0; p], truth_cov.clone())?;
    let forecast = match config.kind {
        ScenarioKind::Calibrated => truth.clone(),
        ScenarioKind::Type1 | ScenarioKind::Type2 | ScenarioKind::Mixed => GaussianLaw::new(
            vec![0.0; p],
            ar1_covariance(p, config.sigma_f_sq, config.rho_f)?,
        )?,
        ScenarioKind::AltVariance | ScenarioKind::AltCorrelation => GaussianLaw::new(
            vec![0.0; p],
            alternating_covariance(
                p,
                config.sigma0_sq,
                config.rho0,
                config.sigma_delta_sq,
                config.rho_delta,
            )?,
        )?,
        ScenarioKind::Bias => truth.with_mean(bias_vector(
            &truth_cov,
            config.bias_axis,
            config.bias_sign,
            config.bias_alpha,
        )?)?,
    };
    Ok((truth, forecast))
}

/// Serializable output of a simulation or verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport<C = ScenarioConfig> {
    pub config: C,
    pub n_cases: usize,
    pub seed: u64,
    pub series: Vec<BotSeries>,
}

impl<C> ExperimentReport<C> {
    pub fn series(&self, variant: Variant) -> Option<&BotSeries> {
        self.series.iter().find(|s| s.variant == variant)
    }
}

/// Transform values of all four variants for case `case` of `replication`.
fn simulate_case(
    truth: &GaussianLaw,
    forecast: &GaussianLaw,
    n: usize,
    seed: u64,
    replication: u64,
    case: u64,
) -> Result<[f64; 4]> {
    let mut g = RngStream::for_case(seed, replication, case).generator();
    let obs = truth.sample(&mut g);
    let members = (0..n).map(|_| forecast.sample(&mut g)).collect();
    let theoretical = bot_theoretical(forecast, &obs)?;
    let ensemble = EnsembleCase::new(obs, members)?;
    let [naive, adjusted, fair] = sample_bots(&ensemble)?;
    Ok([
        theoretical.u.value(),
        naive.u.value(),
        adjusted.u.value(),
        fair.u.value(),
    ])
}

/// Per-variant value vectors for one replication, in [`Variant::ALL`] order.
fn simulate_replication(
    truth: &GaussianLaw,
    forecast: &GaussianLaw,
    n: usize,
    n_cases: usize,
    seed: u64,
    replication: u64,
) -> Result<[Vec<f64>; 4]> {
    if n_cases == 0 {
        return Err(Error::domain("at least one case is required"));
    }
    if n_cases as u64 >= CASE_STRIDE {
        return Err(Error::domain("too many cases for one replication"));
    }
    let rows = (0..n_cases as u64)
        .into_par_iter()
        .map(|c| simulate_case(truth, forecast, n, seed, replication, c))
        .collect::<Result<Vec<_>>>()?;
    let mut out: [Vec<f64>; 4] = Default::default();
    for (i, column) in out.iter_mut().enumerate() {
        *column = rows.iter().map(|r| r[i]).collect();
    }
    Ok(out)
}

/// Runs `n_cases` independent cases of `config` and summarizes each variant.
pub fn run_experiment(
    config: &ScenarioConfig,
    n_cases: usize,
    seed: u64,
    bins: usize,
) -> Result<ExperimentReport> {
    let (truth, forecast) = build_pair(config)?;
    let columns = simulate_replication(&truth, &forecast, config.n, n_cases, seed, 0)?;
    let series = Variant::ALL
        .into_iter()
        .zip(columns)
        .map(|(v, values)| BotSeries::from_values(v, values, bins))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: config.clone(),
        n_cases,
        seed,
        series,
    })
}

/// Fraction of replications whose KS test rejects uniformity, per variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionRates {
    pub n_reps: usize,
    pub level: f64,
    pub rates: BTreeMap<Variant, f64>,
}

impl RejectionRates {
    pub fn get(&self, variant: Variant) -> f64 {
        self.rates[&variant]
    }
}

/// KS rejection rates over `n_reps` independent replications of `n_cases`.
///
/// Replication `r` uses stream indices `r · CASE_STRIDE + case`, so
/// replication 0 reproduces [`run_experiment`] with the same seed.
pub fn rejection_rate(
    config: &ScenarioConfig,
    n_cases: usize,
    n_reps: usize,
    level: f64,
    seed: u64,
) -> Result<RejectionRates> {
    if n_reps == 0 {
        return Err(Error::domain("at least one replication is required"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let (truth, forecast) = build_pair(config)?;
    let rejections = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| {
            let columns = simulate_replication(&truth, &forecast, config.n, n_cases, seed, r)?;
            let mut hit = [0usize; 4];
            for (h, values) in hit.iter_mut().zip(&columns) {
                if ks_test(values)?.p_value.value() < level {
                    *h = 1;
                }
            }
            Ok(hit)
        })
        .collect::<Result<Vec<_>>>()?;
    let rates = Variant::ALL
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let count: usize = rejections.iter().map(|h| h[i]).sum();
            (v, count as f64 / n_reps as f64)
        })
        .collect();
    Ok(RejectionRates {
        n_reps,
        level,
        rates,
    })
}

/// Forecast parameter varied by a power study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    SigmaFSq,
    RhoF,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::SigmaFSq => "sigma_f_sq",
            SweepParameter::RhoF => "rho_f",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigma_f_sq" => Ok(SweepParameter::SigmaFSq),
            "rho_f" => Ok(SweepParameter::RhoF),
            other => Err(Error::domain(format!(
                "unknown sweep parameter `{other}`; expected sigma_f_sq or rho_f"
            ))),
        }
    }

    /// Eight evenly spaced points: `[0.85, 1.2]` for the variance, `[0.4, 0.75]`
    /// for the correlation.
    pub fn default_grid(self) -> Vec<f64> {
        let (lo, hi) = match self {
            SweepParameter::SigmaFSq => (0.85, 1.2),
            SweepParameter::RhoF => (0.4, 0.75),
        };
        evenly_spaced(lo, hi, 8)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `count` points from `lo` to `hi` inclusive, rounded to 12 decimals.
pub fn evenly_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            (x * 1e12).round() / 1e12
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub value: f64,
    pub rates: RejectionRates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub parameter: SweepParameter,
    pub points: Vec<PowerPoint>,
}

/// Rejection rates along a grid of forecast variances or correlations.
///
/// The base scenario must have an AR(1) forecast (calibrated, type 1, type 2
/// or mixed). All grid points share `seed`.
pub fn power_curve(
    base: &ScenarioConfig,
    parameter: SweepParameter,
    grid: &[f64],
    n_cases: usize,
    n_reps: usize,
    level: f64,
    seed: u64,
) -> Result<PowerCurve> {
    if grid.is_empty() {
        return Err(Error::domain("sweep grid must not be empty"));
    }
    let kind = match (base.kind, parameter) {
        (ScenarioKind::Calibrated, SweepParameter::SigmaFSq) => ScenarioKind::Type1,
        (ScenarioKind::Calibrated, SweepParameter::RhoF) => ScenarioKind::Type2,
        (k @ (ScenarioKind::Type1 | ScenarioKind::Type2 | ScenarioKind::Mixed), _) => k,
        (other, _) => {
            return Err(Error::domain(format!(
                "cannot sweep forecast AR(1) parameters of a {other:?} scenario"
            )))
        }
    };
    let points = grid
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            cfg.kind = kind;
            if base.kind == ScenarioKind::Calibrated {
                cfg.sigma_f_sq = base.sigma0_sq;
                cfg.rho_f = base.rho0;
            }
            match parameter {
                SweepParameter::SigmaFSq => cfg.sigma_f_sq = value,
                SweepParameter::RhoF => cfg.rho_f = value,
            }
            Ok(PowerPoint {
                value,
                rates: rejection_rate(&cfg, n_cases, n_reps, level, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerCurve { parameter, points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPoint {
    pub p: usize,
    pub n: usize,
    pub rates: RejectionRates,
}

/// Rejection rates of calibrated forecasts over a `(p, n)` grid.
///
/// Combinations with `n ≤ p` have no fair transform and are skipped.
pub fn level_study(
    p_list: &[usize],
    n_list: &[usize],
    n_cases: usize,
    n_reps: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<LevelPoint>> {
    if p_list.is_empty() || n_list.is_empty() {
        return Err(Error::domain(
            "dimension and ensemble-size lists must be nonempty",
        ));
    }
    let mut out = Vec::new();
    for &p in p_list {
        for &n in n_list {
            if n <= p {
                continue;
            }
            let cfg = ScenarioConfig::calibrated(p, n);
            out.push(LevelPoint {
                p,
                n,
                rates: rejection_rate(&cfg, n_cases, n_reps, level, seed)?,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::domain("no (p, n) combination satisfies n > p"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matstat::{mahalanobis_sq, solve_spd};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ar1_examples() {
        let a = ar1_covariance(3, 1.0, 0.6).unwrap();
        let want = [[1.0, 0.6, 0.36], [0.6, 1.0, 0.6], [0.36, 0.6, 1.0]];
        for k in 0..3 {
            for l in 0..3 {
                assert!(close(a.get(k, l), want[k][l], 1e-15));
            }
        }
        assert_eq!(
            ar1_covariance(4, 2.0, 0.0).unwrap(),
            SymMatrix::identity(4).scaled(2.0)
        );
        assert_eq!(ar1_covariance(1, 2.5, 0.9).unwrap().get(0, 0), 2.5);
        assert!(ar1_covariance(3, 1.0, 1.0).is_err());
        assert!(ar1_covariance(3, 0.0, 0.5).is_err());
        assert!(ar1_covariance(0, 1.0, 0.5).is_err());
    }

    #[test]
    fn ar1_is_positive_definite_on_a_grid() {
        for p in 1..=30 {
            for i in -9..=9 {
                let rho = i as f64 / 10.0;
                assert!(
                    cholesky(&ar1_covariance(p, 1.0, rho).unwrap()).is_ok(),
                    "p={p} rho={rho}"
                );
            }
        }
    }

    #[test]
    fn alternating_examples() {
        let a = alternating_covariance(2, 1.0, 0.6, 0.35, 0.0).unwrap();
        assert!(close(a.get(0, 0), 0.65, 1e-15));
        assert!(close(a.get(1, 1), 1.35, 1e-15));
        assert!(close(a.get(0, 1), 0.6 * (0.65f64 * 1.35).sqrt(), 1e-15));
        assert!(close(a.get(0, 1), 0.56205, 1e-5));

        let b = alternating_covariance(3, 1.0, 0.6, 0.0, 0.15).unwrap();
        assert!(close(b.get(0, 1), 0.45, 1e-15));
        assert!(close(b.get(1, 2), 0.45, 1e-15));
        assert!(close(b.get(0, 2), 0.5625, 1e-15));

        for p in [1, 4, 9] {
            let c = alternating_covariance(p, 1.3, 0.6, 0.0, 0.0).unwrap();
            assert!(c.max_abs_diff(&ar1_covariance(p, 1.3, 0.6).unwrap()) < 1e-15);
        }
        assert!(alternating_covariance(3, 1.0, 0.6, 1.0, 0.0).is_err());
        assert!(alternating_covariance(3, 1.0, 0.6, 1.5, 0.0).is_err());
    }

    #[test]
    fn alternating_rejects_non_pd() {
        // lag-1 correlation −0.95 and lag-2 correlation 0.95² with huge alternation
        let r = alternating_covariance(3, 1.0, 0.0, 0.0, 0.95);
        assert!(r.is_ok() || matches!(r, Err(Error::NotPositiveDefinite { .. })));
        let r = alternating_covariance(5, 1.0, 0.9, 0.0, 0.9);
        assert!(matches!(r, Err(Error::NotPositiveDefinite { .. })), "{r:?}");
    }

    #[test]
    fn bias_vector_examples() {
        let mu = bias_vector(&SymMatrix::identity(2), 1, 1, 0.15).unwrap();
        let r = (-2.0 * 0.85f64.ln()).sqrt();
        assert!(close(mu[0].abs() + mu[1].abs(), r, 1e-10));
        assert!(close(r, 0.570121, 1e-6));

        let sigma = ar1_covariance(3, 1.0, 0.6).unwrap();
        for axis in [1, 2] {
            let plus = bias_vector(&sigma, axis, 1, 0.15).unwrap();
            let minus = bias_vector(&sigma, axis, -1, 0.15).unwrap();
            assert!(plus.iter().zip(&minus).all(|(a, b)| *a == -*b));
            let q = mahalanobis_sq(&plus, &[0.0; 3], &cholesky(&sigma).unwrap()).unwrap();
            assert!(close(q, chi2_quantile(3, 0.15).unwrap(), 1e-8));
        }
        assert!(bias_vector(&sigma, 4, 1, 0.15).is_err());
        assert!(bias_vector(&sigma, 1, 0, 0.15).is_err());
    }

    #[test]
    fn bias_vector_lies_on_the_ellipsoid() {
        for p in [2, 5, 12, 30] {
            for rho in [-0.5, 0.3, 0.8] {
                let sigma = ar1_covariance(p, 1.7, rho).unwrap();
                let chol = cholesky(&sigma).unwrap();
                for axis in [1, 2] {
                    let mu = bias_vector(&sigma, axis, -1, 0.15).unwrap();
                    let y = solve_spd(&chol, &mu).unwrap();
                    let q: f64 = mu.iter().zip(&y).map(|(a, b)| a * b).sum();
                    assert!(close(q, chi2_quantile(p, 0.15).unwrap(), 1e-8));
                }
            }
        }
    }

    #[test]
    fn build_pair_examples() {
        let (t, f) = build_pair(&ScenarioConfig::calibrated(3, 10)).unwrap();
        assert_eq!(t.covariance(), f.covariance());
        assert_eq!(t.mean(), f.mean());

        let (t, f) = build_pair(&ScenarioConfig::preset("type1-under", 3, 10).unwrap()).unwrap();
        assert!(f.covariance().max_abs_diff(&t.covariance().scaled(0.65)) < 1e-15);

        for name in ["bias-a1p", "bias-a2m"] {
            let (t, f) = build_pair(&ScenarioConfig::preset(name, 3, 10).unwrap()).unwrap();
            assert_eq!(t.covariance(), f.covariance());
            assert!(f.mean().iter().any(|m| *m != 0.0));
        }
    }

    #[test]
    fn presets_all_build() {
        for name in PRESET_NAMES {
            let cfg = ScenarioConfig::preset(name, 3, 10).unwrap();
            build_pair(&cfg).unwrap();
        }
        assert!(ScenarioConfig::preset("bias-a2p", 1, 5)
            .unwrap()
            .validate()
            .is_err());
        assert!(ScenarioConfig::preset("nope", 3, 10).is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        assert!(ScenarioConfig::calibrated(3, 3).validate().is_err());
        assert!(ScenarioConfig::calibrated(0, 3).validate().is_err());
        let mut c = ScenarioConfig::preset("alt-variance", 3, 10).unwrap();
        c.sigma_delta_sq = 1.0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::preset("type1-over", 3, 10).unwrap();
        c.rho_f = 1.2;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::preset("bias-a1p", 3, 10).unwrap();
        c.bias_sign = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_case_run() {
        let r = run_experiment(&ScenarioConfig::calibrated(2, 5), 1, 9, 20).unwrap();
        assert_eq!(r.series.len(), 4);
        for s in &r.series {
            let u = s.values[0];
            assert_eq!(s.len(), 1);
            assert!(close(s.d_stat, u.max(1.0 - u), 1e-15));
        }
        assert!(run_experiment(&ScenarioConfig::calibrated(2, 5), 0, 9, 20).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ScenarioConfig::preset("mixed-over", 3, 10).unwrap();
        let a = run_experiment(&cfg, 500, 77, 20).unwrap();
        let b = run_experiment(&cfg, 500, 77, 20).unwrap();
        assert_eq!(a, b);
        let c = run_experiment(&cfg, 500, 78, 20).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn first_replication_matches_run_experiment() {
        let cfg = ScenarioConfig::calibrated(2, 6);
        let report = run_experiment(&cfg, 300, 5, 10).unwrap();
        let rates = rejection_rate(&cfg, 300, 1, 0.05, 5).unwrap();
        for s in &report.series {
            let rejected = if s.p_value.value() < 0.05 { 1.0 } else { 0.0 };
            assert_eq!(rates.get(s.variant), rejected);
        }
    }

    #[test]
    fn rejection_rate_argument_checks() {
        let cfg = ScenarioConfig::calibrated(2, 6);
        assert!(rejection_rate(&cfg, 100, 0, 0.05, 1).is_err());
        assert!(rejection_rate(&cfg, 100, 3, 1.0, 1).is_err());
        let r = rejection_rate(&cfg, 100, 1, 0.05, 1).unwrap();
        assert!(r.rates.values().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn default_grids() {
        assert_eq!(
            SweepParameter::SigmaFSq.default_grid(),
            vec![0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2]
        );
        assert_eq!(
            SweepParameter::RhoF.default_grid(),
            vec![0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75]
        );
        assert_eq!(evenly_spaced(0.3, 0.9, 1), vec![0.3]);
    }

    #[test]
    fn power_curve_shapes() {
        let base = ScenarioConfig::calibrated(2, 8);
        let c = power_curve(&base, SweepParameter::RhoF, &[0.6], 200, 2, 0.05, 3).unwrap();
        assert_eq!(c.points.len(), 1);
        assert!(power_curve(&base, SweepParameter::RhoF, &[], 200, 2, 0.05, 3).is_err());
        let bias = ScenarioConfig::preset("bias-a1p", 2, 8).unwrap();
        assert!(power_curve(&bias, SweepParameter::RhoF, &[0.5], 200, 2, 0.05, 3).is_err());
    }

    #[test]
    fn level_study_skips_invalid_pairs() {
        let rows = level_study(&[2, 8], &[5], 100, 2, 0.05, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].p, rows[0].n), (2, 5));
        assert!(level_study(&[2], &[], 100, 2, 0.05, 1).is_err());
        assert!(level_study(&[8], &[5], 100, 2, 0.05, 1).is_err());
    }
}
