use std::fmt;

use thiserror::Error;

/// A single violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        ConfigError { field: field.to_string(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigError>),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("image too small: {width}x{height} (need at least 3x3)")]
    ImageTooSmall { width: usize, height: usize },
    #[error("object placement failed after {attempts} attempts; arena too small for {n} objects")]
    Placement { n: usize, attempts: usize },
    #[error("unknown cluster {0}")]
    UnknownCluster(u64),
    #[error("submission budget exceeded: {accepted} accepted clusters, limit {limit}")]
    SubmissionBudget { accepted: usize, limit: usize },
    #[error("invalid review transition for cluster {cluster}: {from} -> {to}")]
    Transition { cluster: u64, from: &'static str, to: &'static str },
    #[error("malformed wire frame: {0}")]
    Wire(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
