//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the decoding engine and the evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's preconditions (length mismatch,
    /// non-finite input, out-of-range value, overlapping spans, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Confidence aggregation was asked for an empty window. The caller
    /// decides the fallback (the orchestrator falls back to the base strength).
    #[error("empty confidence window")]
    EmptyWindow,

    /// A prompt template is malformed (missing or duplicated question slot).
    #[error("template error: {0}")]
    Template(String),

    /// Text could not be tokenized by the backend.
    #[error("tokenization error: {0}")]
    Tokenization(String),

    /// Backend transport or protocol failure.
    #[error("backend error: {0}")]
    Backend(String),

    /// Invalid engine or CLI configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A dataset or results file failed to load.
    #[error("load error at line {line}: {msg}")]
    Load { line: usize, msg: String },

    /// An analytics precondition failed (empty group, mismatched item sets).
    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
