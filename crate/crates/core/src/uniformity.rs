//! One-sample Kolmogorov–Smirnov test against `U(0, 1)` and histograms.

use serde::{Deserialize, Serialize};

use crate::bot::Variant;
use crate::error::{Error, Result};
use crate::specialfn::{kolmogorov_pvalue, Probability};

pub const DEFAULT_BINS: usize = 20;

/// KS distance between the empirical CDF of `values` and the uniform CDF.
pub fn ks_statistic(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted.iter().enumerate().fold(0.0_f64, |d, (i, &u)| {
        let above = (i + 1) as f64 / n - u;
        let below = u - i as f64 / n;
        d.max(above).max(below)
    });
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d_stat: f64,
    pub p_value: Probability,
}

pub fn ks_test(values: &[f64]) -> Result<KsResult> {
    let d_stat = ks_statistic(values)?;
    Ok(KsResult {
        d_stat,
        p_value: kolmogorov_pvalue(d_stat, values.len())?,
    })
}

/// Counts of `values` in `bins` equal-width bins on `[0, 1]`.
///
/// Bins are left-closed; `1.0` falls in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<u64>> {
    if bins == 0 {
        return Err(Error::domain("histogram needs at least one bin"));
    }
    let mut counts = vec![0u64; bins];
    for &u in values {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::domain(format!("value {u} outside [0, 1]")));
        }
        let j = ((u * bins as f64) as usize).min(bins - 1);
        counts[j] += 1;
    }
    Ok(counts)
}

/// Per-case transform values of one variant with their summary statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BotSeries {
    pub variant: Variant,
    pub values: Vec<f64>,
    pub d_stat: f64,
    pub p_value: Probability,
    pub histogram: Vec<u64>,
}

impl BotSeries {
    pub fn from_values(variant: Variant, values: Vec<f64>, bins: usize) -> Result<Self> {
        let ks = ks_test(&values)?;
        let histogram = histogram(&values, bins)?;
        Ok(BotSeries {
            variant,
            values,
            d_stat: ks.d_stat,
            p_value: ks.p_value,
            histogram,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fraction of values in the lowest histogram bin.
    pub fn lowest_bin_share(&self) -> f64 {
        self.histogram[0] as f64 / self.len() as f64
    }

    /// Number of values in `[lo, hi)`; `hi = 1` includes 1.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.values
            .iter()
            .filter(|&&u| u >= lo && (u < hi || (hi >= 1.0 && u <= 1.0)))
            .count()
    }
}
