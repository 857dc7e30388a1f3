use thiserror::Error;

pub type Result<T, E = BeeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BeeError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("reference error: {0}")]
    Reference(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("sentence {sentence_id} has {length} subword pieces, encoder maximum is {max_len}")]
    Truncation {
        sentence_id: String,
        length: usize,
        max_len: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("incompatible checkpoint, mismatched groups: {}", .0.join(", "))]
    Incompatible(Vec<String>),

    #[error("missing dependency parse: {0}")]
    MissingParse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BeeError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        BeeError::Parse {
            line,
            message: message.into(),
        }
    }
}
