use std::io;

/// Errors produced by the toolkit.
///
/// The variants are coarse on purpose: callers (the CLI in particular) map
/// them onto a small set of exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes or lengths of the inputs do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// An argument or configuration value violates its contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A file is malformed (bad magic, truncated, unsupported version).
    #[error("malformed {kind} data: {reason}")]
    Format { kind: &'static str, reason: String },
    /// A numerical routine failed or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }
}
