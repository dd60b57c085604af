use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("parse aborted: {bad} of {total} lines malformed (limit {limit:.2}%)")]
    TooManyMalformed { bad: usize, total: usize, limit: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("index {index} out of bounds for {len} nodes")]
    OutOfBounds { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("empty graph: {0}")]
    EmptyGraph(String),

    #[error("too few positive samples: have {have}, need at least {need}")]
    TooFewPositives { have: usize, need: usize },

    #[error("{discarded} of {runs} logistic fits did not converge (limit 20%)")]
    NonConvergence { discarded: usize, runs: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
