//! Pipeline commands behind the `faceage` binary: filter learning, feature
//! extraction, training, prediction and evaluation over a dataset manifest.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::*;
pub use config::RunConfig;
pub use manifest::{read_manifest, ManifestRecord};

/// Command failure, classified by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Unreadable or inconsistent input data (exit 2).
    #[error("{0}")]
    Data(String),
    /// A numerical routine failed (exit 3).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<faceage::Error> for CliError {
    fn from(e: faceage::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
