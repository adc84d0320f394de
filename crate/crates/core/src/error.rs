use fat_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FatError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{op}: {msg}")]
    Parameter { op: &'static str, msg: String },
    #[error("degenerate thin-plate spline: {0}")]
    Degenerate(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{path}: format error at byte {offset}: {msg}")]
    Format { path: String, offset: u64, msg: String },
    #[error("non-finite {component} at iteration {iter}")]
    NonFinite { component: &'static str, iter: u64 },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, FatError>;

impl FatError {
    pub(crate) fn param(op: &'static str, msg: impl Into<String>) -> Self {
        FatError::Parameter { op, msg: msg.into() }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        FatError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data or format, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            FatError::Degenerate(_) | FatError::NonFinite { .. } => 3,
            FatError::Parameter { .. } | FatError::Contract(_) => 2,
            FatError::Tensor(TensorError::Contract(_)) => 3,
            _ => 2,
        }
    }
}
