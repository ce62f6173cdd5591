//! Error type shared by every module.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the pipeline.
///
/// The CLI maps any of these to exit code 2 (data error); usage errors are
/// handled by argument parsing before library code runs.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure (file or socket).
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// CSV writing failure (reads report `Parse` with line numbers instead).
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed input rows; `lines` are 1-based offsets into the source.
    #[error("parse error: {message} (lines {lines:?})")]
    Parse { lines: Vec<usize>, message: String },

    /// A value or structure violates a documented data invariant.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A caller-supplied argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Training loss became non-finite.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    /// A normal matrix that must be inverted is singular.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Exhaustive search would exceed the configured combination cap.
    #[error("search space too large: C(M,B) = {combinations} exceeds cap {cap}")]
    CapExceeded { combinations: u128, cap: u128 },

    /// The remote peer violated the wire protocol.
    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl Error {
    /// Parse error for a single offending line.
    pub fn parse_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { lines: vec![line], message: message.into() }
    }
}
