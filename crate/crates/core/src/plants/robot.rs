use serde::{Deserialize, Serialize};

/// Planar two-link arm with point masses at the link tips. Angles are
/// measured from the hanging position, the second one relative to the
/// first link, so the origin is the stable rest configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub g: f64,
    /// Viscous joint friction. Without it the guarded multisine excitation
    /// cannot keep the joints inside [-pi, pi].
    pub friction: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            l1: 0.8,
            l2: 0.7,
            m1: 2.5,
            m2: 2.0,
            g: 9.81,
            friction: 30.0,
        }
    }
}

fn mass_matrix(z2: f64, p: &RobotParams) -> [[f64; 2]; 2] {
    let c = z2.cos();
    let m22 = p.m2 * p.l2 * p.l2;
    let m12 = m22 + p.m2 * p.l1 * p.l2 * c;
    let m11 = (p.m1 + p.m2) * p.l1 * p.l1 + m22 + 2.0 * p.m2 * p.l1 * p.l2 * c;
    [[m11, m12], [m12, m22]]
}

/// Joint torques that hold the arm still at angles `(z1, z2)`.
pub fn robot_gravity(z1: f64, z2: f64, p: &RobotParams) -> [f64; 2] {
    let tip = p.m2 * p.g * p.l2 * (z1 + z2).sin();
    [(p.m1 + p.m2) * p.g * p.l1 * z1.sin() + tip, tip]
}

pub fn robot_kinetic_energy(x: [f64; 4], p: &RobotParams) -> f64 {
    let m = mass_matrix(x[1], p);
    let (a, b) = (x[2], x[3]);
    0.5 * (m[0][0] * a * a + 2.0 * m[0][1] * a * b + m[1][1] * b * b)
}

/// `(z1', z2', z1'', z2'')` from `M(z) z'' + C(z, z') z' + G(z) = u`.
pub fn robot_deriv(x: [f64; 4], u: [f64; 2], p: &RobotParams) -> [f64; 4] {
    let [z1, z2, w1, w2] = x;
    let m = mass_matrix(z2, p);
    let h = p.m2 * p.l1 * p.l2 * z2.sin();
    let coriolis = [-h * (2.0 * w1 * w2 + w2 * w2), h * w1 * w1];
    let gravity = robot_gravity(z1, z2, p);
    let rhs = [
        u[0] - coriolis[0] - gravity[0] - p.friction * w1,
        u[1] - coriolis[1] - gravity[1] - p.friction * w2,
    ];
    // det = m2 l1^2 l2^2 (m1 + m2 sin^2 z2) > 0 for positive masses.
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let a1 = (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det;
    let a2 = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
    [w1, w2, a1, a2]
}
