use std::path::PathBuf;

/// Errors raised across the identification pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },

    #[error("SVD did not converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate channel `{channel}`: {reason}")]
    DegenerateChannel { channel: String, reason: String },

    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },

    #[error("segment {segment} too short: {len} samples, need at least {needed}")]
    SegmentTooShort {
        segment: usize,
        len: usize,
        needed: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("incompatible artifact: {0}")]
    Incompatible(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short category string, used by the CLI for exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Numerical { .. } | Error::NoConvergence { .. } => "numerical",
            Error::InsufficientData(_) | Error::SegmentTooShort { .. } => "insufficient-data",
            Error::DegenerateChannel { .. } => "degenerate-channel",
            Error::SimulationDiverged { .. } => "simulation-diverged",
            Error::Parse { .. } => "parse",
            Error::Incompatible(_) => "incompatible",
            Error::Io { .. } => "io",
        }
    }
}
