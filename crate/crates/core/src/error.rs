use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid occupation profile: {0}")]
    InvalidProfile(String),

    #[error("invalid collapse parameters: {0}")]
    InvalidParams(String),

    #[error("incomplete noise: expected {expected} increments, got {got}")]
    IncompleteNoise { expected: usize, got: usize },

    #[error("no noise stream bound for cell scope {scope}")]
    UnboundStream { scope: u32 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("no collapse possible: branch profiles are identical (rate = 0)")]
    NoCollapsePossible,

    #[error("step budget of {steps} exhausted before absorption (final q = {q})")]
    NonConvergence { steps: u64, q: f64 },

    #[error("superluminal frame: |v| = {v} m/s is not below c")]
    Superluminal { v: f64 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{failed} of {runs} runs failed, above the 1% abort threshold")]
    TooManyFailures { failed: u64, runs: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Input validation failures, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidProfile(_)
                | Error::InvalidParams(_)
                | Error::Superluminal { .. }
                | Error::InvalidGeometry(_)
                | Error::InvalidProbability(_)
                | Error::InvalidFrame(_)
                | Error::Config(_)
                | Error::NoCollapsePossible
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
