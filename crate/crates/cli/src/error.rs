use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub const EXIT_CONFIG: u8 = 2;
    pub const EXIT_NUMERICAL: u8 = 3;
    pub const EXIT_IO: u8 = 1;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::Numerical(_) => Self::EXIT_NUMERICAL,
            CliError::Io { .. } => Self::EXIT_IO,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Parameter problems are configuration errors; everything else raised by a
/// model while running is a numerical failure.
impl From<atomnum_core::Error> for CliError {
    fn from(e: atomnum_core::Error) -> Self {
        match e {
            atomnum_core::Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
