//! Continuous-time benchmark plants, a fixed-step RK4 integrator, and the
//! excitation, reference and disturbance generators used by the experiments.

mod duffing;
mod patient;
mod robot;
pub mod signals;

pub use duffing::{duffing_deriv, DuffingParams};
pub use patient::{patient_deriv, PatientParams};
pub use robot::{robot_deriv, robot_gravity, robot_kinetic_energy, RobotParams};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlantError {
    #[error("{plant}: non-finite state derivative at t = {time}")]
    Diverged { plant: String, time: f64 },
    #[error("{plant}: expected {expected} values for {what}, got {got}")]
    Dimension {
        plant: String,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid signal spec: {0}")]
    InvalidSignal(String),
    #[error("invalid step: {0}")]
    InvalidStep(String),
}

/// One classical Runge-Kutta step of `x' = f(t, x)` from `(t, x)` over `dt`.
/// `plant` only labels the error.
pub fn rk4_step<F>(plant: &str, mut f: F, t: f64, x: &[f64], dt: f64) -> Result<Vec<f64>, PlantError>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PlantError::InvalidStep(format!("dt must be positive, got {dt}")));
    }
    let mut eval = |t: f64, y: &[f64]| -> Result<Vec<f64>, PlantError> {
        let d = f(t, y);
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(PlantError::Diverged {
                plant: plant.to_string(),
                time: t,
            })
        }
    };
    let offset = |k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let k1 = eval(t, x)?;
    let k2 = eval(t + dt / 2.0, &offset(&k1, dt / 2.0))?;
    let k3 = eval(t + dt / 2.0, &offset(&k2, dt / 2.0))?;
    let k4 = eval(t + dt, &offset(&k3, dt))?;
    let next: Vec<f64> = (0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(PlantError::Diverged {
            plant: plant.to_string(),
            time: t + dt,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plant", rename_all = "snake_case")]
pub enum PlantModel {
    Duffing(DuffingParams),
    Robot(RobotParams),
    Patient(PatientParams),
}

impl PlantModel {
    pub fn name(&self) -> &'static str {
        match self {
            PlantModel::Duffing(_) => "duffing",
            PlantModel::Robot(_) => "robot",
            PlantModel::Patient(_) => "patient",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            PlantModel::Duffing(_) => 2,
            PlantModel::Robot(_) => 4,
            PlantModel::Patient(_) => 5,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PlantModel::Robot(_) => 2,
            _ => 1,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PlantModel::Robot(_) => 2,
            _ => 1,
        }
    }

    /// Zero for the mechanical plants, the basal state for the patient.
    pub fn rest_state(&self) -> Vec<f64> {
        match self {
            PlantModel::Patient(p) => vec![p.g_b, 0.0, p.i_b, 0.0, 0.0],
            _ => vec![0.0; self.state_dim()],
        }
    }

    /// State derivative; `w` is the unmeasured exogenous input (meals),
    /// ignored by the mechanical plants.
    pub fn derivative(&self, x: &[f64], u: &[f64], w: f64) -> Vec<f64> {
        match self {
            PlantModel::Duffing(p) => duffing_deriv([x[0], x[1]], u[0], p).to_vec(),
            PlantModel::Robot(p) => robot_deriv([x[0], x[1], x[2], x[3]], [u[0], u[1]], p).to_vec(),
            PlantModel::Patient(p) => patient_deriv([x[0], x[1], x[2], x[3], x[4]], u[0], w, p).to_vec(),
        }
    }

    /// Noise-free measurement of the state.
    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        match self {
            PlantModel::Robot(_) => vec![x[0], x[1]],
            _ => vec![x[0]],
        }
    }
}

/// A plant with its current state, advanced one sampling period at a time
/// under a zero-order-hold input.
#[derive(Debug, Clone)]
pub struct OdePlant {
    model: PlantModel,
    state: Vec<f64>,
    time: f64,
    substeps: usize,
}

/// Integration substeps per sampling period.
pub const DEFAULT_SUBSTEPS: usize = 10;

impl OdePlant {
    pub fn new(model: PlantModel, state: Vec<f64>) -> Result<Self, PlantError> {
        if state.len() != model.state_dim() {
            return Err(PlantError::Dimension {
                plant: model.name().into(),
                what: "state",
                expected: model.state_dim(),
                got: state.len(),
            });
        }
        Ok(Self {
            model,
            state,
            time: 0.0,
            substeps: DEFAULT_SUBSTEPS,
        })
    }

    pub fn at_rest(model: PlantModel) -> Self {
        let state = model.rest_state();
        Self::new(model, state).expect("rest state has the plant dimension")
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    pub fn model(&self) -> &PlantModel {
        &self.model
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn output(&self) -> Vec<f64> {
        self.model.output(&self.state)
    }

    /// Holds `u` for `period` while `w(t)` varies freely.
    pub fn step(&mut self, u: &[f64], w: &dyn Fn(f64) -> f64, period: f64) -> Result<(), PlantError> {
        if u.len() != self.model.input_dim() {
            return Err(PlantError::Dimension {
                plant: self.model.name().into(),
                what: "input",
                expected: self.model.input_dim(),
                got: u.len(),
            });
        }
        let dt = period / self.substeps as f64;
        let t0 = self.time;
        for s in 0..self.substeps {
            let t = t0 + s as f64 * dt;
            self.state = rk4_step(
                self.model.name(),
                |t, x| self.model.derivative(x, u, w(t)),
                t,
                &self.state,
                dt,
            )?;
        }
        self.time = t0 + period;
        Ok(())
    }
}
