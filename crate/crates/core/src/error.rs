use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance error: {0}")]
    Covariance(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("pattern covariance is numerically singular (observed variables {observed:?}, reciprocal condition {rcond:e})")]
    SingularCov { observed: Vec<usize>, rcond: f64 },

    #[error("invalid starting values: {0}")]
    Start(String),

    #[error("relative bias is unstable: truth {truth} is within the zero guard {guard}")]
    NearZeroTruth { truth: f64, guard: f64 },

    #[error("empty estimate sample")]
    EmptySample,

    #[error("all estimates equal the truth; the sample is exactly unbiased and Z* is undefined")]
    ZeroRmse,

    #[error("degenerate sample: zero spread at {value}")]
    DegenerateSample { value: f64 },

    #[error("layout error: {0}")]
    Layout(String),

    #[error("verdict table is missing cells: {0:?}")]
    MissingCell(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
