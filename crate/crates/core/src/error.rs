use thiserror::Error;

/// Errors produced by the channel-prediction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("vocabulary-mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("corrupt token: id {id} exceeds vocabulary bound {bound}")]
    CorruptToken { id: u32, bound: u32 },

    #[error("undefined NMSE: predicted sequence has zero power")]
    UndefinedNmse,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
