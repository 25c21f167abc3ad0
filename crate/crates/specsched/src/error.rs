use std::path::PathBuf;

/// Errors produced by any pipeline stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error("non-square image: {height}x{width}")]
    NonSquare { height: usize, width: usize },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown label: {0}")]
    UnknownLabel(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
