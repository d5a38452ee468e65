use thiserror::Error;

pub type Result<T> = std::result::Result<T, DaodError>;

/// Which dataset an input error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Source => f.write_str("source"),
            Side::Target => f.write_str("target"),
        }
    }
}

#[derive(Debug, Error)]
pub enum DaodError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: source has {source_dim} feature columns, target has {target_dim}")]
    DimensionMismatch { source_dim: usize, target_dim: usize },

    #[error("{side} row {row} contains a non-finite value")]
    NonFinite { side: Side, row: usize },

    #[error("{side} dataset is empty")]
    EmptyDataset { side: Side },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no target samples are pseudo-labeled as a known class")]
    EmptyKnownTargets,

    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperparam { name: &'static str, reason: String },

    #[error("linear system is numerically singular (condition estimate {condition:.3e}, jitter {jitter:.1e})")]
    NumericalFailure { condition: f64, jitter: f64 },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DaodError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DaodError::InvalidInput(msg.into())
    }
}
