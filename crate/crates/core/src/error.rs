use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Malformed input; `line` is 1-based and counts the header.
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate day: {0}")]
    DegenerateDay(String),

    #[error("state error: {0}")]
    State(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("protocol rejection: {0}")]
    Rejected(String),

    #[error(transparent)]
    Nn(#[from] amiguard_nn::NnError),

    #[error(transparent)]
    Crypto(#[from] amiguard_crypto::CryptoError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
