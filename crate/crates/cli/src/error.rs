use amiguard_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 2 for configuration problems, 3 for bad or missing data, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::Argument(_) => 2,
                CoreError::Parse { .. }
                | CoreError::Format(_)
                | CoreError::Data(_)
                | CoreError::DegenerateDay(_)
                | CoreError::Io { .. }
                | CoreError::Json(_) => 3,
                _ => 1,
            },
        }
    }
}

impl From<amiguard_nn::NnError> for CliError {
    fn from(e: amiguard_nn::NnError) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<amiguard_crypto::CryptoError> for CliError {
    fn from(e: amiguard_crypto::CryptoError) -> Self {
        CliError::Core(e.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
