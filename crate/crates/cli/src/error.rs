use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Everything a command can fail with, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },

    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(#[from] blangevin_core::Error),

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },

    #[error("cannot encode output: {0}")]
    Encode(String),
}

impl CliError {
    /// 2 for anything wrong with the input, including core errors that
    /// reject the model or protocol, 3 for failures inside the computation,
    /// 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use blangevin_core::Error as Core;
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Invalid(_) => 2,
            CliError::Numerical(
                Core::Config(_) | Core::Domain(_) | Core::UnphysicalModel(_) | Core::Protocol(_) | Core::DimensionGuard { .. },
            ) => 2,
            CliError::Numerical(_) => 3,
            CliError::Write { .. } | CliError::Encode(_) => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
