use std::path::PathBuf;

use vtgan_core::attack::AttackError;
use vtgan_core::data::DataError;
use vtgan_core::encode::EncodeError;
use vtgan_core::eval::EvalError;
use vtgan_core::protocol::ProtocolError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("message log: {0}")]
    Log(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl std::fmt::Display) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.to_string(),
        }
    }

    /// 2 for invalid input, 3 for numeric failure, 4 for protocol desync.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Protocol(e) if e.is_desync() => 4,
            Error::Protocol(e) if e.is_numeric() => 3,
            Error::Protocol(ProtocolError::Transport(_)) => 4,
            Error::Eval(EvalError::Nn(vtgan_core::nn::NnError::NonFinite(_))) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
