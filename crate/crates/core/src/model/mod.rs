//! Classifiers: weighted logistic regression and a random forest.

mod forest;
mod logistic;

pub use forest::{
    bootstrap_counts, fit_forest, fit_forest_with_counts, forest_predict_proba, ForestConfig,
    ForestModel, Node, Tree,
};
pub use logistic::{
    fit_logistic, predict_proba, ConvergenceReport, LogisticConfig, LogisticModel,
    LogisticObjective,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("labels must be 0 or 1")]
    InvalidLabels,
    #[error("sample weights must be finite and positive")]
    InvalidWeights,
}
