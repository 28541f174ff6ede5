use std::io;

use thiserror::Error;

/// Errors raised by the counting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition of an operation was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Caller-supplied data is unusable (e.g. an image smaller than one patch).
    #[error("invalid input: {0}")]
    Input(String),

    /// A binary file did not match its declared layout.
    #[error("format error: {0}")]
    Format(String),

    /// An operation required fractional-mode counts.
    #[error("count mode error: {0}")]
    Mode(String),

    /// A metric is undefined for the given data.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite activation while extracting patch ({row}, {col})")]
    Extraction { row: usize, col: usize },

    #[error("non-finite gradient in parameter block `{block}`")]
    Divergence { block: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("finite-difference oracle failed: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
