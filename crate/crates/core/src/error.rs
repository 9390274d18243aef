use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GrfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GrfError {
    /// A caller broke an input contract (dimension mismatch, bad grid, invalid site...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A configuration value is unusable (unknown algorithm, non-PD step matrix...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The exact oracle declines to enumerate a state space that is too large.
    #[error("oracle refused: {what} exceeds the limit of {limit}")]
    OracleRefusal { what: String, limit: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no ergodicity certificate: {0}")]
    NoCertificate(String),

    #[error("out of regime: N must exceed {threshold} (got {n})")]
    OutOfRegime { threshold: f64, n: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix is not negative definite: {0}")]
    NotNegativeDefinite(String),

    #[error("Robbins-Monro diverged after {iterations} iterations (last iterate {last:?})")]
    Diverged { iterations: usize, last: Vec<f64> },

    #[error("perturbation bound violated: {0}")]
    BoundViolation(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl GrfError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GrfError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GrfError::Invalid(msg.into())
    }
}
