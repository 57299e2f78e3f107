use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SggError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SggError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("attention over an empty key set")]
    EmptyKeys,

    #[error("capacity exceeded: {what} ({got} > {limit})")]
    Capacity {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown label `{label}` for {kind} vocabulary")]
    Vocabulary { label: String, kind: &'static str },

    #[error("no embedding for label `{0}` in the embedding table")]
    MissingEmbedding(String),

    #[error("checkpoint incompatible: parameter `{name}` {detail}")]
    Compatibility { name: String, detail: String },

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("non-finite loss at step {step}")]
    Divergence { step: usize },

    #[error(transparent)]
    Remote(#[from] crate::data::remote::RemoteError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SggError {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        SggError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SggError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// defect in the program.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            SggError::NonFinite { .. }
                | SggError::Divergence { .. }
                | SggError::EmptyKeys
                | SggError::Dimension { .. }
                | SggError::Index { .. }
        )
    }
}
