use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("axis {axis}: {detail}")]
    Axis { axis: &'static str, detail: String },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),

    #[error("optimizer step with no accumulated gradients")]
    EmptyGradients,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("model variant {variant} {detail}")]
    Variant { variant: &'static str, detail: String },

    #[error("not a checkpoint (bad magic bytes)")]
    NotACheckpoint,

    #[error("unsupported checkpoint format version {0}")]
    CheckpointVersion(u32),

    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint does not match model: {0}")]
    CheckpointMismatch(String),

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("config line {line}: {detail}")]
    Config { line: usize, detail: String },

    #[error("non-finite loss at step {step}")]
    NonFinite { step: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status: 2 usage or configuration, 3 I/O or file format,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Format { .. }
            | Error::NotACheckpoint
            | Error::CheckpointVersion(_)
            | Error::CheckpointTruncated(_) => 3,
            Error::NonFinite { .. } | Error::EmptyGradients | Error::NonScalarBackward(_) => 4,
            Error::Shape(_)
            | Error::Axis { .. }
            | Error::Invalid(_)
            | Error::Variant { .. }
            | Error::CheckpointMismatch(_)
            | Error::Config { .. } => 2,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
