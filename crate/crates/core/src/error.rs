use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("age {age} outside 1..={horizon}")]
    InvalidAge { age: usize, horizon: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric contract violated: {0}")]
    Numeric(String),

    #[error("cube {0} is not active")]
    StaleHandle(u32),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("context symbol {symbol} at age {age} has zero probability")]
    UndefinedContext { age: usize, symbol: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("infeasible arrival process: {0}")]
    InfeasibleArrival(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: data integrity: {message}")]
    Integrity {
        path: String,
        line: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("ground truth missing: {0}")]
    GroundTruth(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: &str, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line driver: 2 for bad
    /// configuration, 3 for bad or unreadable data, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) | Error::InvalidAge { .. } => 2,
            Error::Parse { .. }
            | Error::Integrity { .. }
            | Error::UndefinedContext { .. }
            | Error::GroundTruth(_)
            | Error::Io { .. } => 3,
            _ => 1,
        }
    }
}
