use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid worker count m = {0}: need at least 2")]
    InvalidWorkerCount(usize),

    #[error("invalid threshold t = {t} for m = {m}: need 2t < m")]
    InvalidThreshold { m: usize, t: usize },

    #[error("invalid nodes: {0}")]
    InvalidNodes(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("fault budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("honest restriction is rank deficient: {0}")]
    RankDeficient(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error on line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
