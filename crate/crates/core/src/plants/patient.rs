use serde::{Deserialize, Serialize};

/// Glucose-insulin dynamics of a type 1 diabetic patient: minimal glucose
/// model driven by a subcutaneous insulin depot. Time is in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatientParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub v_g: f64,
    pub v_d: f64,
    pub v_i: f64,
    pub k21: f64,
    pub k_a: f64,
    pub k_d: f64,
    pub k_e: f64,
    pub i_b: f64,
    pub g_b: f64,
}

impl Default for PatientParams {
    fn default() -> Self {
        Self {
            p1: 0.031,
            p2: 0.012,
            p3: 9.56e-6,
            v_g: 1.45,
            v_d: 0.2,
            v_i: 5e-3,
            k21: 0.0166,
            k_a: 0.0133,
            k_d: 0.0033,
            k_e: 0.3,
            i_b: 0.0,
            g_b: 180.0,
        }
    }
}

impl PatientParams {
    /// Plasma insulin reached under a constant infusion rate `u`.
    pub fn steady_insulin(&self, u: f64) -> f64 {
        self.k_a * u / (self.v_i * (self.k_d + self.k_a) * self.v_d * self.k_e)
    }

    /// Glucose reached under a constant infusion rate `u` without meals.
    pub fn steady_glucose(&self, u: f64) -> f64 {
        let eta = self.p3 * (self.steady_insulin(u) - self.i_b) / self.p2;
        self.p1 * self.g_b / (self.p1 + eta)
    }

    /// Constant infusion rate that settles glucose at `target`.
    pub fn basal_rate_for(&self, target: f64) -> f64 {
        let eta = self.p1 * self.g_b / target - self.p1;
        let insulin = eta * self.p2 / self.p3 + self.i_b;
        insulin * self.v_i * (self.k_d + self.k_a) * self.v_d * self.k_e / self.k_a
    }
}

/// State `(y, eta, I, I1, I2)`: glucose, remote insulin action, plasma
/// insulin, and the two subcutaneous depots. `u` is the insulin rate and
/// `w` the meal input.
pub fn patient_deriv(x: [f64; 5], u: f64, w: f64, p: &PatientParams) -> [f64; 5] {
    let [y, eta, i, i1, i2] = x;
    [
        -(p.p1 + eta) * y + p.p1 * p.g_b + w / p.v_g,
        -p.p2 * eta + p.p3 * (i - p.i_b),
        p.k_a / p.v_d * i2 - p.k_e * i,
        -p.k21 * i1 + u / p.v_i,
        p.k21 * i1 - (p.k_d + p.k_a) * i2,
    ]
}
