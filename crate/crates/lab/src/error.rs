use std::path::{Path, PathBuf};

use acl_core::Error as CoreError;

/// Everything a command can fail with, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Malformed or invalid configuration; `location` is `file:line` when known.
    #[error("config error: {location}: {message}")]
    Config { location: String, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } => 2,
            LabError::Data(_) => 3,
            LabError::Numeric(_) => 4,
            LabError::Output { .. } => 1,
        }
    }

    pub fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Config { location: location.into(), message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        LabError::Data(message.into())
    }

    pub fn output(path: &Path, source: std::io::Error) -> Self {
        LabError::Output { path: path.to_path_buf(), source }
    }

    pub fn read(path: &Path, source: std::io::Error) -> Self {
        LabError::Data(format!("cannot read {}: {source}", path.display()))
    }
}

/// Classifies a library error raised while working on `context`.
pub fn from_core(context: &str, e: CoreError) -> LabError {
    match e {
        CoreError::Config { field, reason } => LabError::config(context, format!("`{field}` {reason}")),
        CoreError::NumericFailure { epoch, batch } => {
            LabError::Numeric(format!("{context}: non-finite loss or gradient at epoch {epoch}, batch {batch}"))
        }
        CoreError::NonFinite(what) => LabError::Numeric(format!("{context}: non-finite value in {what}")),
        other => LabError::Data(format!("{context}: {other}")),
    }
}
