use std::io;

use thiserror::Error;

/// Errors produced by the network, simulation and threshold routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} nodes, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("self-interaction ({0}, {0}) is not allowed")]
    SelfLoop(usize),

    #[error("event times are not sorted ascending (position {position})")]
    Unsorted { position: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("no connected graph after {attempts} attempts")]
    Exhausted { attempts: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("requested {requested} steps but only {available} snapshots are available")]
    InsufficientSnapshots { requested: usize, available: usize },

    #[error("correlation is undefined for constant input")]
    UndefinedCorrelation,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must lie in [0, 1], got {value}"
        )))
    }
}
