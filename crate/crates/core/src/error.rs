use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("word `{word}` is not in the lexicon")]
    OutOfVocabulary { word: String },

    #[error("unknown phone symbol `{0}`")]
    UnknownPhone(String),

    #[error("unknown speaker `{0}`")]
    UnknownSpeaker(String),

    #[error("malformed alignment: {0}")]
    MalformedAlignment(String),

    #[error("invalid edit request: {0}")]
    InvalidRequest(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value during training: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
