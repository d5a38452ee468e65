use daod_core::DaodError;
use thiserror::Error;

/// Failure classes of the command-line tool, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<DaodError> for CliError {
    fn from(e: DaodError) -> Self {
        let msg = e.to_string();
        match e {
            DaodError::Io { .. } | DaodError::Parse { .. } => CliError::Io(msg),
            DaodError::NumericalFailure { .. } | DaodError::Degenerate(_) => CliError::Numerical(msg),
            _ => CliError::Config(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
