//! Identification of direct multi-step polynomial predictors from sampled
//! input/output data.

mod data;
mod model;
mod regressors;
mod spec;

pub use data::SystemData;
pub use model::{fit, FitReport, PredictionModel, MODEL_SCHEMA};
pub use regressors::{build_regressors, regressor_at, RegressionSet};
pub use spec::{ModelSpec, ModelStructure};

use crate::poly::PolyError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SysIdError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("normal equations are singular (ridge = {ridge}); use a positive ridge weight")]
    Singular { ridge: f64 },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("model file: {0}")]
    Json(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}
