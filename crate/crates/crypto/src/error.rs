use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid ciphertext: {0}")]
    Ciphertext(String),

    #[error("prime generation failed after {0} attempts")]
    PrimeGeneration(usize),

    #[error("reading overflow: {0}")]
    Overflow(String),

    #[error("malformed encoding: {0}")]
    Encoding(String),
}

pub type Result<T> = std::result::Result<T, CryptoError>;
