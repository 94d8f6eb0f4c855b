use std::path::PathBuf;

/// Errors surfaced by the std layer. User errors map to CLI exit code 1,
/// everything else to 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] speechedit_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("vocoder failed: {0}")]
    Vocoder(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format { path: path.into(), message: message.to_string() }
    }

    /// True for problems caused by the caller's input rather than by us.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Core(e) => !matches!(e, speechedit_core::Error::NonFinite(_)),
            Error::Io { .. } | Error::Format { .. } | Error::Config(_) | Error::NotFound(_) => true,
            Error::Diverged(_) | Error::Vocoder(_) | Error::Internal(_) => false,
        }
    }
}
