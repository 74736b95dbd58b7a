use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed trace: {}", format_rows(.0))]
    MalformedRows(Vec<RowError>),

    #[error("trace is empty")]
    EmptyTrace,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("series too short: need at least {need} bins, got {got}")]
    SeriesTooShort { need: usize, got: usize },

    #[error("non-finite intensity at t={0}")]
    NonFiniteIntensity(f64),

    #[error("linear system is not positive definite at row {0}")]
    SingularSystem(usize),

    #[error("intensity mass {requested} unreachable: only {available} available before t={horizon_end}")]
    HorizonExhausted {
        requested: f64,
        available: f64,
        horizon_end: f64,
    },

    #[error("requested horizon {requested}s exceeds extrapolation cap {cap}s")]
    HorizonCap { requested: f64, cap: f64 },

    #[error("target {target} outside achievable range [{lo}, {hi}]")]
    TargetOutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("query {index}: {message}")]
    Scaler { index: usize, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep point {param}: {source}")]
    SweepPoint {
        param: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization: {0}")]
    Serialization(String),
}

/// A rejected row in an input trace. `row` is 1-based and counts the header as row 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

fn format_rows(rows: &[RowError]) -> String {
    let shown: Vec<String> = rows
        .iter()
        .take(10)
        .map(|r| format!("row {}: {}", r.row, r.message))
        .collect();
    let mut out = shown.join("; ");
    if rows.len() > 10 {
        out.push_str(&format!("; ... ({} more)", rows.len() - 10));
    }
    out
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input or configuration rather than a runtime failure.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => true,
            Error::Stage { source, .. } | Error::SweepPoint { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
