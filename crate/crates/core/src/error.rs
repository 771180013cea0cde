use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("effective time range is empty (lo {lo} > hi {hi})")]
    EmptyRange { lo: i64, hi: i64 },

    #[error("time {time} is outside the observed range [1, {n}]")]
    OutOfRange { time: i64, n: usize },

    #[error("value {value} is outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("underdetermined least squares: {rows} rows for {cols} columns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("rank-deficient design: numerical rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("no fitted regression for response {0}")]
    MissingFit(String),

    #[error("lag window {window} exceeds the {available} available times")]
    WindowTooLarge { window: usize, available: usize },

    #[error("invalid lag-window candidates: {0}")]
    InvalidCandidates(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("range of {count} times is too small for {folds} folds")]
    RangeTooSmall { count: usize, folds: usize },

    #[error("fold of {rows} rows is too small for candidate ({time_basis}, {cov_basis})")]
    FoldTooSmall {
        rows: usize,
        time_basis: usize,
        cov_basis: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("non-positive price {value} in column {column} at row {row}")]
    NonPositivePrice {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("series {0} has no usable observations")]
    AllMissingSeries(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Underdetermined { .. }
            | Error::RankDeficient { .. }
            | Error::Domain { .. } => ErrorClass::Numerical,
            Error::InvalidConfig(_) | Error::InvalidCandidates(_) | Error::Toml(_) => {
                ErrorClass::Usage
            }
            _ => ErrorClass::Data,
        }
    }
}
