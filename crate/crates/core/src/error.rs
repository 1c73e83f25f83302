use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the testing engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("p-value for hypothesis `{id}` is {value}, expected a number in [0, 1]")]
    InvalidPValue { id: String, value: f64 },

    #[error("hypothesis id `{0}` appears more than once")]
    DuplicateId(String),

    #[error("{values} p-values but {ids} ids")]
    LengthMismatch { values: usize, ids: usize },

    #[error("no p-values supplied")]
    Empty,

    #[error("significance level {0} is outside (0, 1)")]
    InvalidAlpha(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} is outside 1..={max}")]
    OutOfRange { what: &'static str, value: usize, max: usize },

    #[error("local test `{0}` called on an empty subset")]
    EmptySubset(String),

    #[error("rule plan has no local test for subset size {size} (plan covers 1..={covered})")]
    PlanGap { size: usize, covered: usize },

    #[error("no calibrated critical value for `{test}` at subset size {size}")]
    CalibrationMissing { test: String, size: usize },

    #[error("`{test}` was calibrated at alpha = {calibrated}, asked to decide at alpha = {requested}")]
    AlphaMismatch { test: String, calibrated: f64, requested: f64 },

    #[error("`{test}` does not expose a p-value")]
    NoPValue { test: String },

    #[error("brute-force closure refused: n = {n} exceeds the cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("{routine} did not converge within {iterations} iterations")]
    NoConvergence { routine: &'static str, iterations: usize },

    #[error("`{0}` is not a monotone combination (sum of a scalar function of the p-values)")]
    NotMonotoneCombination(String),

    #[error("covariance matrix is not positive semidefinite (pivot {pivot} = {value})")]
    NotPositiveSemidefinite { pivot: usize, value: f64 },

    #[error("calibration cache {path}: {reason}")]
    Cache { path: PathBuf, reason: String },

    #[error("stage {stage}: {source}")]
    Stage { stage: usize, source: Box<Error> },

    #[error("trial {trial}: {source}")]
    Trial { trial: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
