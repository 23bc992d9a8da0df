use serde::{Deserialize, Serialize};

use super::SysIdError;

/// Structural restriction applied to the basis before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelStructure {
    /// Full graded basis up to the model degree.
    General,
    /// Every basis function has degree at most one in the future commands.
    AffineInU,
    /// Single-input model meant for piecewise-constant inversion: the
    /// controller holds one command value over the whole horizon.
    SimoConstU,
}

/// Shape of the prediction model.
///
/// The regression variables of every component are laid out as
/// `(u_t, ..., u_{t+h-1}, u_{t-1}, ..., u_{t-n}, y_{t-1}, ..., y_{t-n})`
/// where `h` is the horizon and `n` the order; each `u` block has
/// `input_dim` entries and each `y` block `output_dim` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub order: usize,
    pub horizon: usize,
    pub degree: u32,
    /// Ridge weight. `None` selects a scale-aware floor of
    /// `1e-8 * trace(G) / N`; `Some(0.0)` forces a plain least-squares solve.
    #[serde(default)]
    pub ridge: Option<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub structure: ModelStructure,
    /// Optional cap on the combined degree in the future commands.
    #[serde(default)]
    pub u_degree_cap: Option<u32>,
    /// Fit in standardized coordinates; the stored polynomials are always
    /// expressed in the raw variables.
    #[serde(default)]
    pub standardize: bool,
}

impl ModelSpec {
    pub fn new(order: usize, horizon: usize, degree: u32, input_dim: usize, output_dim: usize) -> Self {
        Self {
            order,
            horizon,
            degree,
            ridge: None,
            input_dim,
            output_dim,
            structure: ModelStructure::General,
            u_degree_cap: None,
            standardize: false,
        }
    }

    pub fn with_structure(mut self, structure: ModelStructure) -> Self {
        self.structure = structure;
        self
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = Some(ridge);
        self
    }

    pub fn with_standardize(mut self, on: bool) -> Self {
        self.standardize = on;
        self
    }

    pub fn validate(&self) -> Result<(), SysIdError> {
        let bad = |m: &str| Err(SysIdError::InvalidSpec(m.to_string()));
        if self.order == 0 {
            return bad("order must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return bad("input and output dimensions must be positive");
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return bad("ridge must be a non-negative finite number");
            }
        }
        if self.structure == ModelStructure::SimoConstU && self.input_dim != 1 {
            return bad("simo_const_u requires a single command input");
        }
        Ok(())
    }

    /// Number of future command variables, `horizon * input_dim`.
    pub fn n_decision(&self) -> usize {
        self.horizon * self.input_dim
    }

    /// Length of the regressor `q-`.
    pub fn n_regressor(&self) -> usize {
        self.order * (self.input_dim + self.output_dim)
    }

    pub fn n_vars(&self) -> usize {
        self.n_decision() + self.n_regressor()
    }

    /// Number of predicted outputs, `horizon * output_dim`.
    pub fn n_components(&self) -> usize {
        self.horizon * self.output_dim
    }

    /// Effective cap on the degree in the future commands.
    pub fn effective_u_cap(&self) -> Option<u32> {
        match self.structure {
            ModelStructure::AffineInU => Some(self.u_degree_cap.map_or(1, |c| c.min(1))),
            _ => self.u_degree_cap,
        }
    }
}
