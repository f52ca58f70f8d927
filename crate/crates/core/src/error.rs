use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Every variant maps onto one of the process exit codes used by the CLI,
/// see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("decode error at byte offset {offset}: {msg}")]
    Decode { offset: usize, msg: String },

    #[error("format error at row {row}: {msg}")]
    Format { row: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("second-order differentiation is not supported through `{0}`")]
    DoubleBackward(&'static str),

    #[error("non-finite loss at step {step}")]
    Divergence { step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("{}: {msg}", path.display())]
    File { path: PathBuf, msg: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn file(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::File {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::DoubleBackward(_) => 2,
            Error::Decode { .. }
            | Error::Format { .. }
            | Error::Domain(_)
            | Error::Insufficient(_)
            | Error::File { .. }
            | Error::Io(_)
            | Error::Json(_) => 3,
            Error::Shape { .. }
            | Error::Divergence { .. }
            | Error::Undefined(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
