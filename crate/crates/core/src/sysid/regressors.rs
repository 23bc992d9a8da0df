use super::{ModelSpec, SysIdError, SystemData};

/// Regression rows built from a data record.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSet {
    /// One variable tuple `(u+, q-)` per admissible time index.
    pub features: Vec<Vec<f64>>,
    /// Matching targets `(y_t, ..., y_{t+h-1})`, flattened step-major.
    pub targets: Vec<Vec<f64>>,
    /// Data index `t` of each row.
    pub times: Vec<usize>,
}

impl RegressionSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// The regressor `q-_t = (u_{t-1}, ..., u_{t-n}, y_{t-1}, ..., y_{t-n})`.
/// Requires `t >= order`.
pub fn regressor_at(inputs: &[Vec<f64>], outputs: &[Vec<f64>], t: usize, order: usize) -> Vec<f64> {
    assert!(t >= order, "regressor needs {order} past samples at t={t}");
    let mut q = Vec::new();
    for lag in 1..=order {
        q.extend_from_slice(&inputs[t - lag]);
    }
    for lag in 1..=order {
        q.extend_from_slice(&outputs[t - lag]);
    }
    q
}

pub fn build_regressors(data: &SystemData, spec: &ModelSpec) -> Result<RegressionSet, SysIdError> {
    spec.validate()?;
    if data.input_dim() != spec.input_dim {
        return Err(SysIdError::Dimension {
            what: "input columns (u1..)",
            expected: spec.input_dim,
            got: data.input_dim(),
        });
    }
    if data.output_dim() != spec.output_dim {
        return Err(SysIdError::Dimension {
            what: "output columns (y1..)",
            expected: spec.output_dim,
            got: data.output_dim(),
        });
    }
    let needed = spec.order + spec.horizon;
    if data.len() < needed {
        return Err(SysIdError::InsufficientData {
            needed,
            got: data.len(),
        });
    }
    let (u, y) = (data.inputs(), data.outputs());
    let rows = data.len() - needed + 1;
    let mut set = RegressionSet {
        features: Vec::with_capacity(rows),
        targets: Vec::with_capacity(rows),
        times: Vec::with_capacity(rows),
    };
    for t in spec.order..=data.len() - spec.horizon {
        let mut x = Vec::with_capacity(spec.n_vars());
        for step in 0..spec.horizon {
            x.extend_from_slice(&u[t + step]);
        }
        x.extend(regressor_at(u, y, t, spec.order));
        let mut target = Vec::with_capacity(spec.n_components());
        for step in 0..spec.horizon {
            target.extend_from_slice(&y[t + step]);
        }
        set.features.push(x);
        set.targets.push(target);
        set.times.push(t);
    }
    Ok(set)
}
