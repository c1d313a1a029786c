//! Cost estimation: index memory, runtime regression and online runtime
//! adjustment.

pub mod features;
pub mod gp;
pub mod memory;
pub mod metrics;
pub mod regression;

use thiserror::Error;

pub use features::{expand_features, extract_meta_features, Expansion, MetaFeatures, Standardization};
pub use gp::{adjust_predictions, kernel, GpAdjuster};
pub use memory::{estimate_index_memory, estimate_total_memory, tune_leaf_capacity, MemoryEstimate};
pub use metrics::Metrics;
pub use regression::{fit_runtime_model, RuntimeModel, RuntimePrediction, TrainingSample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("memory budget {budget} is below the minimum feasible budget of {minimum} units")]
    BudgetInfeasible { budget: f64, minimum: u64 },
    #[error("model has not been trained")]
    ModelNotTrained,
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("{rows} training rows, need at least {needed}")]
    NotEnoughRows { rows: usize, needed: usize },
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("model version {found:?} is not supported (expected {expected})")]
    VersionMismatch { found: Option<u64>, expected: u32 },
    #[error("malformed model json: {0}")]
    Json(String),
}
