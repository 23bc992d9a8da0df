//! End-to-end case studies: identify a plant from a design run, then track
//! references in closed loop with the inverted model.
//!
//! Index convention: command `u_k` is held over `[k Ts, (k+1) Ts)` and output
//! record `y_k` is the measurement taken at the end of that interval, so the
//! model's `y_t` responds to `u_t` and the controller at instant `k` already
//! holds the newest measurement `y_{k-1}` in its regressor.

mod checks;
mod config;
mod report;
mod run;

pub use checks::{Check, CheckOutcome};
pub use config::{
    ControllerSetup, DataGeneration, Excitation, ExperimentConfig, InsulinSchedule, NoiseSpec, Policy,
    ReferenceSpec, Scaling, Scenario, EXPERIMENT_SCHEMA,
};
pub use report::{
    ExperimentReport, FitSummary, ScenarioResult, ScenarioSummary, Timing, Trajectory, TrialReport,
    REPORT_SCHEMA,
};
pub use run::{
    data_label, design_run, run_experiment, run_trial, test_label, DesignRun, RunOptions, DATA_STREAMS, DATA_STREAM_PREFIX,
    TEST_STREAMS, TEST_STREAM_PREFIX,
};

use crate::controller::ControlError;
use crate::plants::PlantError;
use crate::sysid::SysIdError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    SysId(#[from] SysIdError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Root mean square of `errors`; zero for an empty slice.
pub fn rms(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Per-channel RMS of `reference - output` over paired samples.
pub fn tracking_rms(reference: &[Vec<f64>], output: &[Vec<f64>]) -> Result<Vec<f64>, ExperimentError> {
    if reference.len() != output.len() {
        return Err(ExperimentError::Config(format!(
            "{} reference samples against {} outputs",
            reference.len(),
            output.len()
        )));
    }
    let width = reference.first().map_or(0, Vec::len);
    if reference.iter().chain(output).any(|row| row.len() != width) {
        return Err(ExperimentError::Config("ragged reference or output rows".into()));
    }
    Ok((0..width)
        .map(|j| {
            let e: Vec<f64> = reference.iter().zip(output).map(|(r, y)| r[j] - y[j]).collect();
            rms(&e)
        })
        .collect())
}
