use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Harness failures, grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Solver(#[from] minimax_gda::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for configuration and input-data problems, 2 for numerical aborts
    /// and I/O.
    pub fn exit_code(&self) -> i32 {
        use minimax_gda::Error as E;
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Solver(E::Config(_) | E::Unsupported(_) | E::Data(_)) => 1,
            HarnessError::Solver(_) | HarnessError::Io { .. } => 2,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
