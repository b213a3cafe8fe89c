use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Checksum(String),
    #[error(transparent)]
    Core(#[from] funscreen_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Checksum(_) => "checksum",
            CliError::Core(e) => e.kind(),
        }
    }

    /// Process exit status: 2 for configuration and usage problems, 1 for
    /// everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// `error: kind=<kind> message=<text>` on a single line.
    pub fn line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], "; ");
        format!("error: kind={} message={}", self.kind(), message)
    }
}

pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.into(),
        source,
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
