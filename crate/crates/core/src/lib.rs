//! Identification of polynomial multi-step predictors and their inversion
//! by box-constrained coordinate minimization, with the plants, benchmark
//! and closed-loop studies built on top.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod controller;
pub mod experiments;
pub mod plants;
pub mod poly;
pub mod repro;
pub mod sysid;

pub use benchmark::{BenchmarkConfig, BenchmarkReport};
pub use controller::{ControllerConfig, InversionResult, SolverMode};
pub use experiments::{ExperimentConfig, ExperimentReport};
pub use plants::PlantModel;
pub use poly::{Interval, SparsePolynomial, UnivariatePolynomial};
pub use sysid::{ModelSpec, PredictionModel, SystemData};
