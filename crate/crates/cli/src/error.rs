use std::path::Path;

use glcmfuse_core::Error as CoreError;

/// A failed command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad command line (exit 1).
    #[error("usage: {0}")]
    Usage(String),
    /// Unreadable or invalid input data (exit 2).
    #[error("data: {0}")]
    Data(String),
    /// Invalid configuration or an exceeded budget (exit 3).
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Config(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Budget { .. }
            | CoreError::Config(_)
            | CoreError::Window { .. }
            | CoreError::Spec(_)
            | CoreError::Threshold(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
