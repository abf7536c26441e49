use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ColaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ColaError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("token id {token} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("bad activation file: {0}")]
    Format(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown sample id `{0}`")]
    Lookup(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<ColaError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ColaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ColaError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            already @ ColaError::Stage { .. } => already,
            other => ColaError::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }
}
