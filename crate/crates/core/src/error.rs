use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative method failed to reach its tolerance.
    #[error("numerical failure: {what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Some computed quantity or stored parameter became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Stationary wealth piles up at the top of the asset grid.
    #[error("stationary wealth reaches the top of the asset grid (a = {grid_max}); enlarge the grid")]
    GridTooSmall { grid_max: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema { .. } | Error::Io { .. } => 2,
            _ => 1,
        }
    }
}
