use serde::{Deserialize, Serialize};

/// Damped oscillator with a cubic spring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DuffingParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self {
            alpha1: -1.0,
            alpha2: 1.0,
            beta: 0.2,
        }
    }
}

pub fn duffing_deriv(x: [f64; 2], u: f64, p: &DuffingParams) -> [f64; 2] {
    [
        x[1],
        -p.alpha1 * x[0] - p.alpha2 * x[0].powi(3) - p.beta * x[1] + u,
    ]
}
