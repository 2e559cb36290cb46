//! Calibration checks for multivariate Gaussian ensemble forecasts.
//!
//! An ensemble forecast and the vector that verified are mapped to a value in
//! `[0, 1]` by a box ordinate transform. Over many cases, calibrated forecasts
//! give uniform values. The [`bot`] module provides four variants of the
//! transform; only [`bot::bot_fair`] is exactly uniform for calibrated
//! ensembles of every size `n > p`.
//!
//! ```
//! use fairbot::bot::Variant;
//! use fairbot::scenarios::{run_experiment, ScenarioConfig};
//!
//! let report = run_experiment(&ScenarioConfig::calibrated(3, 10), 1000, 7, 20)?;
//! let fair = report.series(Variant::Fair).unwrap();
//! assert_eq!(fair.histogram.iter().sum::<u64>(), 1000);
//! # Ok::<(), fairbot::Error>(())
//! ```
//!
//! The guide under `book/` walks through the concepts; its code blocks run as
//! doctests of this crate.

// Negated comparisons reject NaN; index loops mirror the matrix algebra.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::excessive_precision
)]

pub mod bot;
pub mod error;
pub mod matstat;
pub mod report;
pub mod scenarios;
pub mod specialfn;
pub mod uniformity;
pub mod verifydata;

pub use error::{Error, Result};

#[cfg(test)]
#[path = "../tests/common/oracles.rs"]
#[allow(dead_code)]
mod test_oracles;

// One module per chapter so a failing snippet points at its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/uniformity.md")]
    mod uniformity {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
