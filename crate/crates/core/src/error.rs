use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("too few ensemble members: have {have}, need at least {need}")]
    TooFewMembers { have: usize, need: usize },

    #[error("eigenvalue iteration did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty sample")]
    EmptySample,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error in case `{case}`: {message}")]
    Schema { case: String, message: String },

    #[error("non-finite value in case `{case}`")]
    NonFiniteValue { case: String },

    #[error("subsample of {n_sub} members is larger than the {available} available")]
    SubsampleTooLarge { n_sub: usize, available: usize },

    #[error("case `{case}` has no observation")]
    MissingObservation { case: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures caused by the numbers themselves rather than by the
    /// inputs or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::ConvergenceFailure { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
