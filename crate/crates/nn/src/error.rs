use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer} ({kind}): {msg}")]
    Shape {
        layer: usize,
        kind: &'static str,
        msg: String,
    },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (lr {learning_rate}); \
         lower the learning rate or check inputs for overflow"
    )]
    NonFinite {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },

    #[error("params file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
