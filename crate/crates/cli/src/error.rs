use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration.
    #[error("{0}")]
    Usage(String),

    /// Unreadable or malformed input data.
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] ccar3::Error),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(ccar3::Error::RankDeficient(_)) => 3,
            CliError::Core(ccar3::Error::EmptyModel { .. }) => 4,
            CliError::Core(ccar3::Error::CvFailed(_)) => 5,
            _ => 1,
        }
    }
}
