use std::path::PathBuf;

use sparse_core::Error as CoreError;

pub type Result<T> = std::result::Result<T, SparseError>;

#[derive(Debug, thiserror::Error)]
pub enum SparseError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {source}", path.display())]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl SparseError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SparseError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        SparseError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        SparseError::Config(message.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SparseError::Core(
                CoreError::NonFiniteLoss { .. } | CoreError::UndefinedRate(_) | CoreError::ZeroVariance(_)
            )
        )
    }

    /// Process exit code: 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}
