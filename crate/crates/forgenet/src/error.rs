//! Error type shared by every module, plus the process exit-code mapping
//! used by the command-line interface.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not compose.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced non-finite values or failed numerically.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A file could not be parsed; `offset` is the byte position of the
    /// offending line.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A file declares a format version this build does not understand.
    #[error("unsupported format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    /// A model file names a layer tag this build does not implement.
    #[error("unknown layer tag `{0}`")]
    UnknownLayer(String),

    /// An insertion policy matched no layer.
    #[error("insertion policy selected no layers")]
    EmptyInsertion,

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    /// Bad command-line or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dimension(
        context: impl Into<String>,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    /// Process exit code for this error: 2 config, 3 I/O or parse,
    /// 4 numeric, 5 contract violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) | Error::Parse { .. } | Error::Version { .. } | Error::UnknownLayer(_) => {
                3
            }
            Error::Numeric(_) | Error::Diverged { .. } => 4,
            Error::Dimension { .. } | Error::Contract(_) | Error::EmptyInsertion => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
