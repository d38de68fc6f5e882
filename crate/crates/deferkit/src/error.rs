//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("output-space mismatch: expected {expected}, found {found}")]
    OutputSpaceMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("example {0} not found in prediction table")]
    MissingExample(u64),

    #[error("cardinality k={k} out of range for entity set of size {size}")]
    CardinalityOutOfRange { k: usize, size: usize },

    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite score at entity index {index}: {value}")]
    NonFiniteScore { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} outside domain of {what}")]
    DomainError { what: &'static str, value: f64 },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty selection")]
    EmptySelection,

    #[error("decision rule {rule} does not apply to {regime} outputs")]
    RuleMismatch {
        rule: &'static str,
        regime: &'static str,
    },

    #[error("conditional distribution undefined for example {0}")]
    ConditionalUndefined(u64),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("non-numeric cell at row {row}, column {column:?}: {cell:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        cell: String,
    },

    #[error("empty input file {0}")]
    EmptyFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
