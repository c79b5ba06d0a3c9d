//! Dataset schema, CSV ingestion, group sampling and fixture generation.

mod encode;
mod fixture;
mod sample;
mod schema;
mod table;

pub use encode::{ColumnKind, Encoder};
pub use fixture::{
    presets, FeatureDistribution, FixtureSampler, FixtureSpec, GroupFixture, OutcomeModel,
    PairCorrelation,
};
pub use sample::{
    sample_groups, select_prompt_examples, GroupSample, SampleParams, DEFAULT_MAX_REDRAWS,
};
pub use schema::{FeatureKind, FeatureSpec, Schema};
pub use table::{load_table, read_table, Record, Table};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error at row {row}, column {column:?}: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}, column {column:?}: value {value} outside declared bounds")]
    BoundsViolation {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("unknown group label {0:?}")]
    UnknownLabel(String),
    #[error("unknown outcome {0:?}")]
    UnknownOutcome(String),
    #[error("group {group:?} has {available} rows but {required} are required (short by {})", required - available)]
    InsufficientGroup {
        group: String,
        available: usize,
        required: usize,
    },
    #[error("cannot satisfy prompt-example constraint for outcome {outcome:?}: {reason}")]
    ConstraintInfeasible { outcome: String, reason: String },
    #[error("invalid fixture spec: {0}")]
    InvalidFixture(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    pub(crate) fn parse(row: usize, column: &str, message: &str) -> Self {
        DataError::ParseError {
            row,
            column: column.to_string(),
            message: message.to_string(),
        }
    }

    /// Fills in the row number of a row-level error.
    pub(crate) fn at_row(self, row: usize) -> Self {
        match self {
            DataError::ParseError {
                column, message, ..
            } => DataError::ParseError {
                row,
                column,
                message,
            },
            DataError::BoundsViolation { column, value, .. } => DataError::BoundsViolation {
                row,
                column,
                value,
            },
            other => other,
        }
    }
}
