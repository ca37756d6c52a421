use thiserror::Error;

/// Errors produced by the numerical kernel and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("CTC target of length {label_len} with {repeats} adjacent repeats needs at least {needed} frames, got {frames}")]
    Infeasible {
        frames: usize,
        label_len: usize,
        repeats: usize,
        needed: usize,
    },

    #[error("character {0:?} is not in the vocabulary")]
    OutOfVocabulary(char),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no matching pair for corpus {corpus}, subset {subset}")]
    Unmatched { corpus: String, subset: String },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
