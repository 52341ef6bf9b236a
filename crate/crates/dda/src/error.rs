use std::path::{Path, PathBuf};

/// Errors of the pipeline and the command-line tool.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad flags, configuration or arguments.
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] dda_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file that exists but cannot be read as the expected format.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Artifacts that do not belong together.
    #[error("{0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit status when some clusters missed their completion target.
pub const EXIT_UNSATISFIED: i32 = 3;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// 1 for invalid input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Format { .. } | Error::Mismatch(_) => 1,
            Error::Core(dda_core::Error::InvalidConfig(_)) => 1,
            Error::Core(_) | Error::Io { .. } => 2,
        }
    }
}
