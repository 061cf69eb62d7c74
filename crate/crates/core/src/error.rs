use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input: bad dimensions, out-of-range indices, malformed matrices,
    /// actions violating the scheduling constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// An iterative solver stopped at `max_iter` without reaching its tolerance.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A problem is too large to enumerate or tabulate.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Shape disagreement between tensors or networks.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Training produced non-finite values.
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 for validation-style failures,
    /// 2 for convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. } | Error::Diverged(_) => 2,
            _ => 1,
        }
    }
}
