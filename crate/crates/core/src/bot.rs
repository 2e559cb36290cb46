//! Box ordinate transforms for Gaussian predictive laws.
//!
//! All four variants map an observation to `u = 1 − G(q)`, where `q` is a
//! squared Mahalanobis distance and `G` is a reference CDF:
//!
//! | variant       | center, scatter             | reference CDF                      |
//! |---------------|-----------------------------|------------------------------------|
//! | theoretical   | `μ`, `Σ` of a known law     | `χ²_p`                             |
//! | naive         | ensemble mean `m`, `S`      | `χ²_p`                             |
//! | adjusted      | `m̃`, `S̃` including the obs  | `χ²_p`                             |
//! | fair          | `m`, `S`                    | `F_{p,n−p}` at `n(n−p)/(p(n²−1))·q` |
//!
//! Under calibration the theoretical and fair values are exactly standard
//! uniform; the naive and adjusted values are only asymptotically so.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matstat::{
    augmented_moments, cholesky, ensemble_moments, mahalanobis_sq, mvn_sample, CholeskyFactor,
    NormalSource, SymMatrix,
};
use crate::specialfn::{chi2_sf, f_sf, Probability};

/// Which transform produced a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Theoretical,
    Naive,
    Adjusted,
    Fair,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Theoretical,
        Variant::Naive,
        Variant::Adjusted,
        Variant::Fair,
    ];

    /// The variants computable from an ensemble alone.
    pub const SAMPLE: [Variant; 3] = [Variant::Naive, Variant::Adjusted, Variant::Fair];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Theoretical => "theoretical",
            Variant::Naive => "naive",
            Variant::Adjusted => "adjusted",
            Variant::Fair => "fair",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown variant `{s}`")))
    }
}

/// A multivariate normal law `N_p(μ, Σ)` with its Cholesky factor cached.
#[derive(Clone, Debug)]
pub struct GaussianLaw {
    mean: Vec<f64>,
    covariance: SymMatrix,
    chol: CholeskyFactor,
}

impl GaussianLaw {
    pub fn new(mean: Vec<f64>, covariance: SymMatrix) -> Result<Self> {
        check_dim(covariance.dim(), mean.len())?;
        let chol = cholesky(&covariance)?;
        Ok(GaussianLaw {
            mean,
            covariance,
            chol,
        })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], SymMatrix::identity(dim)).expect("identity is positive definite")
    }

    /// Same covariance, different mean.
    pub fn with_mean(&self, mean: Vec<f64>) -> Result<Self> {
        check_dim(self.dim(), mean.len())?;
        Ok(GaussianLaw {
            mean,
            covariance: self.covariance.clone(),
            chol: self.chol.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.covariance
    }

    pub fn cholesky(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn sample<S: NormalSource + ?Sized>(&self, source: &mut S) -> Vec<f64> {
        mvn_sample(&self.mean, &self.chol, source)
    }
}

/// One verification instance: an observation and `n` ensemble members.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleCase {
    obs: Vec<f64>,
    members: Vec<Vec<f64>>,
}

impl EnsembleCase {
    pub fn new(obs: Vec<f64>, members: Vec<Vec<f64>>) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::domain("observation vector must be nonempty"));
        }
        if members.is_empty() {
            return Err(Error::TooFewMembers { have: 0, need: 1 });
        }
        for m in &members {
            check_dim(obs.len(), m.len())?;
        }
        Ok(EnsembleCase { obs, members })
    }

    pub fn dim(&self) -> usize {
        self.obs.len()
    }

    /// Ensemble size `n`.
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn obs(&self) -> &[f64] {
        &self.obs
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BotValue {
    pub variant: Variant,
    pub u: Probability,
}

impl BotValue {
    fn new(variant: Variant, u: Probability) -> Self {
        BotValue { variant, u }
    }
}

/// `u = 1 − χ²_p(q)`; `q = 0` gives exactly 1.
fn chi2_transform(p: usize, q: f64) -> Result<Probability> {
    if q == 0.0 {
        return Ok(Probability::ONE);
    }
    chi2_sf(p, q)
}

/// Scale turning a squared Mahalanobis distance to the ensemble mean into an
/// `F_{p,n−p}` variate: `n(n − p) / (p(n² − 1))`.
pub fn fair_scale(n: usize, p: usize) -> f64 {
    let (n, p) = (n as f64, p as f64);
    n * (n - p) / (p * (n * n - 1.0))
}

fn fair_transform(n: usize, p: usize, d2: f64) -> Result<Probability> {
    if d2 == 0.0 {
        return Ok(Probability::ONE);
    }
    f_sf(p, n - p, fair_scale(n, p) * d2)
}

/// Transform against a fully known law.
pub fn bot_theoretical(law: &GaussianLaw, obs: &[f64]) -> Result<BotValue> {
    let q = mahalanobis_sq(obs, &law.mean, &law.chol)?;
    Ok(BotValue::new(
        Variant::Theoretical,
        chi2_transform(law.dim(), q)?,
    ))
}

/// Plug-in transform using the ensemble mean and covariance.
///
/// Fails with [`Error::NotPositiveDefinite`] when the sample covariance is
/// singular, which is certain for `n ≤ p`.
pub fn bot_naive(case: &EnsembleCase) -> Result<BotValue> {
    let d2 = ensemble_distance(case)?;
    Ok(BotValue::new(
        Variant::Naive,
        chi2_transform(case.dim(), d2)?,
    ))
}

/// Plug-in transform with the observation folded into the mean and
/// covariance estimates.
pub fn bot_adjusted(case: &EnsembleCase) -> Result<BotValue> {
    let (center, scatter) = augmented_moments(&case.members, &case.obs)?;
    let q = mahalanobis_sq(&case.obs, &center, &cholesky(&scatter)?)?;
    Ok(BotValue::new(
        Variant::Adjusted,
        chi2_transform(case.dim(), q)?,
    ))
}

/// Transform that is exactly uniform under calibration for every `n > p`.
pub fn bot_fair(case: &EnsembleCase) -> Result<BotValue> {
    let (n, p) = (case.size(), case.dim());
    if n <= p {
        return Err(Error::TooFewMembers {
            have: n,
            need: p + 1,
        });
    }
    let d2 = ensemble_distance(case)?;
    Ok(BotValue::new(Variant::Fair, fair_transform(n, p, d2)?))
}

/// Naive, adjusted and fair values, sharing the ensemble factorization.
pub fn sample_bots(case: &EnsembleCase) -> Result<[BotValue; 3]> {
    let (n, p) = (case.size(), case.dim());
    if n <= p {
        return Err(Error::TooFewMembers {
            have: n,
            need: p + 1,
        });
    }
    let d2 = ensemble_distance(case)?;
    Ok([
        BotValue::new(Variant::Naive, chi2_transform(p, d2)?),
        bot_adjusted(case)?,
        BotValue::new(Variant::Fair, fair_transform(n, p, d2)?),
    ])
}

/// `(x₀ − m)ᵀ S⁻¹ (x₀ − m)`.
fn ensemble_distance(case: &EnsembleCase) -> Result<f64> {
    let (m, s) = ensemble_moments(&case.members)?;
    mahalanobis_sq(&case.obs, &m, &cholesky(&s)?)
}
