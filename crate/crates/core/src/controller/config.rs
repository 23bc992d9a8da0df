use serde::{Deserialize, Serialize};

use crate::poly::Interval;

use super::ControlError;

/// Which coordinate solver variant handles the inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Cyclic exact coordinate minimization of a general polynomial cost.
    General,
    /// Model affine in the commands: the cost is a convex quadratic.
    Affine,
    /// Single command value held over the whole horizon.
    SimoConst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Weight on the squared command norm.
    pub mu: f64,
    /// One interval per decision coordinate (a single interval in
    /// `simo_const` mode).
    #[serde(rename = "box")]
    pub bounds: Vec<Interval>,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    /// A sweep that lowers the objective by less than this ends the solve.
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default = "default_true")]
    pub warm_start: bool,
    pub mode: SolverMode,
    /// Extra uniformly random starts in `general` mode; the best result wins.
    #[serde(default)]
    pub n_restarts: usize,
    #[serde(default)]
    pub restart_seed: u64,
    /// Optional early exit once the objective reaches this level.
    #[serde(default)]
    pub j_stop: Option<f64>,
}

fn default_max_sweeps() -> usize {
    50
}

fn default_stop_tol() -> f64 {
    1e-9
}

fn default_true() -> bool {
    true
}

impl ControllerConfig {
    pub fn new(mode: SolverMode, bounds: Vec<Interval>) -> Self {
        Self {
            mu: 0.0,
            bounds,
            max_sweeps: default_max_sweeps(),
            stop_tol: default_stop_tol(),
            warm_start: true,
            mode,
            n_restarts: 0,
            restart_seed: 0,
            j_stop: None,
        }
    }

    /// The same interval repeated for `len` coordinates.
    pub fn uniform(mode: SolverMode, interval: Interval, len: usize) -> Self {
        Self::new(mode, vec![interval; len])
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(ControlError::InvalidConfig("mu must be non-negative".into()));
        }
        if self.max_sweeps == 0 {
            return Err(ControlError::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(ControlError::InvalidConfig("stop_tol must be non-negative".into()));
        }
        if self.bounds.is_empty() {
            return Err(ControlError::InvalidConfig("box is empty".into()));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.bounds.iter().map(Interval::midpoint).collect()
    }
}
