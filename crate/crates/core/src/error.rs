use std::path::PathBuf;

/// Errors produced anywhere in the regression stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss={loss}, parameter norms {norms:?}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        norms: Vec<f64>,
    },

    #[error("format error in {path} at byte offset {offset}: {msg}")]
    Format {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("incompatible checkpoint {path}: {msg}")]
    Incompatible { path: PathBuf, msg: String },

    #[error("variant {variant}: {source}")]
    Variant {
        variant: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that originate from reading or validating external data.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Format { .. }
            | Error::Parse { .. }
            | Error::Incompatible { .. }
            | Error::Io { .. }
            | Error::Json(_) => true,
            Error::Variant { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
