use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample too short for covariate `{covariate}`: {detail}")]
    TooShortSample { covariate: String, detail: String },

    #[error("invalid loss quartet: {0}")]
    InvalidQuartet(String),

    #[error("numerically singular matrix: {0}")]
    NumericalSingularity(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("vintage {vintage} for series `{series}` precedes the latest ingested vintage {latest}")]
    OutOfOrderVintage {
        series: String,
        vintage: String,
        latest: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
