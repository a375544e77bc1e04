use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("span {start}..{end} is out of range for text of {len} characters")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("query needs {query_units} units but the budget leaves a window of {window} with overlap {overlap}")]
    QueryExceedsBudget {
        query_units: usize,
        window: isize,
        overlap: usize,
    },

    #[error("document `{0}` is empty")]
    EmptyDocument(String),

    #[error("unknown document `{0}`")]
    UnknownDocument(String),

    #[error("logit sheet for `{example_id}` slice {slice_index}: {message}")]
    BadSheet {
        example_id: String,
        slice_index: usize,
        message: String,
    },

    #[error("missing embedding for key `{0}`")]
    MissingEmbedding(String),

    #[error("missing resource: {0}")]
    MissingResource(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }
}
