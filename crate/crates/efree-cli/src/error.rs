use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("parameter `{key}`: {reason}")]
    Param { key: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("column `{column}` missing from {table}")]
    MissingColumn { table: String, column: String },
    #[error("{0}")]
    Model(#[from] efree::EfError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn param(key: &str, reason: impl Into<String>) -> Self {
        CliError::Param { key: key.to_string(), reason: reason.into() }
    }
}
