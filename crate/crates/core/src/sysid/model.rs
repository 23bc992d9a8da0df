use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::poly::{
    enumerate_basis, enumerate_basis_with_leading_cap, monomial_value, Monomial, SparsePolynomial,
};

use super::{build_regressors, ModelSpec, SysIdError, SystemData};

pub const MODEL_SCHEMA: &str = "polyinv-model/1";

/// Relative pivot size below which the unregularized solve is declared
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Diagnostics recorded by [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Residual RMS per component on the training rows.
    pub residual_rms: Vec<f64>,
    pub rows: usize,
    pub basis_size: usize,
    /// Ridge weight actually applied.
    pub ridge: f64,
    /// Regressor columns that were constant in the data; basis functions
    /// involving them are aliases of lower-degree ones and were left out.
    pub constant_columns: Vec<usize>,
    /// True when the basis is larger than the number of rows.
    pub underdetermined: bool,
}

/// Direct multi-step polynomial predictor: one polynomial per predicted
/// output per horizon step, all over the same `(u+, q-)` variable tuple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionModel {
    schema: String,
    spec: ModelSpec,
    components: Vec<SparsePolynomial>,
    fit_report: Option<FitReport>,
}

#[derive(Deserialize)]
struct RawModel {
    schema: String,
    spec: ModelSpec,
    components: Vec<SparsePolynomial>,
    #[serde(default)]
    fit_report: Option<FitReport>,
}

impl<'de> Deserialize<'de> for PredictionModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawModel::deserialize(d)?;
        if raw.schema != MODEL_SCHEMA {
            return Err(serde::de::Error::custom(format!(
                "unsupported model schema `{}`",
                raw.schema
            )));
        }
        let mut m = PredictionModel::from_parts(raw.spec, raw.components)
            .map_err(serde::de::Error::custom)?;
        m.fit_report = raw.fit_report;
        Ok(m)
    }
}

impl PredictionModel {
    /// Assembles a model from explicit polynomials, checking counts, variable
    /// layout, and the structural restriction.
    pub fn from_parts(
        spec: ModelSpec,
        components: Vec<SparsePolynomial>,
    ) -> Result<Self, SysIdError> {
        spec.validate()?;
        if components.len() != spec.n_components() {
            return Err(SysIdError::Dimension {
                what: "model components",
                expected: spec.n_components(),
                got: components.len(),
            });
        }
        for c in &components {
            if c.n_vars() != spec.n_vars() {
                return Err(SysIdError::Dimension {
                    what: "component variables",
                    expected: spec.n_vars(),
                    got: c.n_vars(),
                });
            }
            if let Some(cap) = spec.effective_u_cap() {
                if c.degree_in_leading(spec.n_decision()) > cap {
                    return Err(SysIdError::InvalidSpec(format!(
                        "component exceeds command degree cap {cap}"
                    )));
                }
            }
        }
        Ok(Self {
            schema: MODEL_SCHEMA.to_string(),
            spec,
            components,
            fit_report: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn components(&self) -> &[SparsePolynomial] {
        &self.components
    }

    pub fn fit_report(&self) -> Option<&FitReport> {
        self.fit_report.as_ref()
    }

    /// Predicted outputs `(y_t, ..., y_{t+h-1})`, flattened step-major.
    pub fn predict(&self, u_plus: &[f64], q_minus: &[f64]) -> Result<Vec<f64>, SysIdError> {
        if u_plus.len() != self.spec.n_decision() {
            return Err(SysIdError::Dimension {
                what: "u+",
                expected: self.spec.n_decision(),
                got: u_plus.len(),
            });
        }
        if q_minus.len() != self.spec.n_regressor() {
            return Err(SysIdError::Dimension {
                what: "q-",
                expected: self.spec.n_regressor(),
                got: q_minus.len(),
            });
        }
        let x: Vec<f64> = u_plus.iter().chain(q_minus).copied().collect();
        Ok(self.components.iter().map(|c| c.eval_unchecked(&x)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SysIdError> {
        serde_json::from_str(text).map_err(|e| SysIdError::Json(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), SysIdError> {
        std::fs::write(path, self.to_json()).map_err(|e| SysIdError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SysIdError> {
        let text = std::fs::read_to_string(path).map_err(|e| SysIdError::Io(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Ridge-regularized least-squares identification of every component.
///
/// All components share the same design matrix, so a single factorization
/// serves every right-hand side.
pub fn fit(data: &SystemData, spec: &ModelSpec) -> Result<PredictionModel, SysIdError> {
    let set = build_regressors(data, spec)?;
    let n_vars = spec.n_vars();
    let rows = set.len();

    let (mean, std, constant_columns) = column_stats(&set.features);
    let mut basis = match spec.effective_u_cap() {
        Some(cap) => enumerate_basis_with_leading_cap(n_vars, spec.degree, spec.n_decision(), cap)?,
        None => enumerate_basis(n_vars, spec.degree)?,
    };
    basis.retain(|e| constant_columns.iter().all(|&k| e[k] == 0));
    let nb = basis.len();

    let scaled: Vec<Vec<f64>> = if spec.standardize {
        set.features
            .iter()
            .map(|x| {
                x.iter()
                    .enumerate()
                    .map(|(k, v)| (v - mean[k]) / std[k])
                    .collect()
            })
            .collect()
    } else {
        set.features.clone()
    };

    let phi = DMatrix::from_fn(rows, nb, |r, c| monomial_value(&basis[c], &scaled[r]));
    let y = DMatrix::from_fn(rows, spec.n_components(), |r, c| set.targets[r][c]);

    // An explicit transpose takes nalgebra's blocked gemm path, which is far
    // faster than `tr_mul` for wide bases.
    let phi_t = phi.transpose();
    let gram = &phi_t * &phi;
    let ridge = match spec.ridge {
        Some(l) => l,
        None => 1e-8 * gram.trace() / nb as f64,
    };
    let alpha = if ridge == 0.0 {
        solve_unregularized(&phi, &y)?
    } else {
        let mut g = gram;
        for i in 0..nb {
            g[(i, i)] += ridge;
        }
        let chol = Cholesky::new(g).ok_or(SysIdError::Singular { ridge })?;
        chol.solve(&(&phi_t * &y))
    };

    let residual = &y - &phi * &alpha;
    let residual_rms = (0..spec.n_components())
        .map(|j| (residual.column(j).norm_squared() / rows as f64).sqrt())
        .collect();

    let components = (0..spec.n_components())
        .map(|j| {
            let coeffs: Vec<f64> = (0..nb).map(|i| alpha[(i, j)]).collect();
            if spec.standardize {
                expand_standardized(&basis, &coeffs, &mean, &std, n_vars, spec.degree)
            } else {
                SparsePolynomial::new(
                    n_vars,
                    spec.degree,
                    basis
                        .iter()
                        .zip(&coeffs)
                        .map(|(e, &c)| Monomial::new(e.clone(), c)),
                )
                .map_err(SysIdError::from)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut model = PredictionModel::from_parts(spec.clone(), components)?;
    model.fit_report = Some(FitReport {
        residual_rms,
        rows,
        basis_size: nb,
        ridge,
        constant_columns,
        underdetermined: nb > rows,
    });
    Ok(model)
}

fn column_stats(features: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let n = features[0].len();
    let rows = features.len() as f64;
    let mut mean = vec![0.0; n];
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for x in features {
        for k in 0..n {
            mean[k] += x[k] / rows;
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    let mut var = vec![0.0; n];
    for x in features {
        for k in 0..n {
            var[k] += (x[k] - mean[k]).powi(2) / rows;
        }
    }
    let mut std = Vec::with_capacity(n);
    let mut constant = Vec::new();
    for k in 0..n {
        if hi[k] - lo[k] <= 1e-12 * mean[k].abs().max(1.0) {
            constant.push(k);
            std.push(1.0);
        } else {
            std.push(var[k].sqrt());
        }
    }
    (mean, std, constant)
}

fn solve_unregularized(phi: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>, SysIdError> {
    if phi.nrows() < phi.ncols() {
        return Err(SysIdError::Singular { ridge: 0.0 });
    }
    let (q, r) = phi.clone().qr().unpack();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= RANK_TOL * diag_max) {
        return Err(SysIdError::Singular { ridge: 0.0 });
    }
    r.solve_upper_triangular(&q.tr_mul(y))
        .ok_or(SysIdError::Singular { ridge: 0.0 })
}

// Rewrites sum_i c_i * prod_k ((x_k - m_k) / s_k)^{e_ik} in the raw variables.
fn expand_standardized(
    basis: &[Vec<u32>],
    coeffs: &[f64],
    mean: &[f64],
    std: &[f64],
    n_vars: usize,
    degree: u32,
) -> Result<SparsePolynomial, SysIdError> {
    let mut powers: HashMap<(usize, u32), SparsePolynomial> = HashMap::new();
    let mut terms: Vec<Monomial> = Vec::new();
    for (e, &c) in basis.iter().zip(coeffs) {
        if c == 0.0 {
            continue;
        }
        let mut prod = SparsePolynomial::constant(n_vars, c);
        for (k, &ek) in e.iter().enumerate() {
            if ek == 0 {
                continue;
            }
            let factor = powers.entry((k, ek)).or_insert_with(|| {
                let z = &SparsePolynomial::variable(n_vars, k).scale(1.0 / std[k])
                    - &SparsePolynomial::constant(n_vars, mean[k] / std[k]);
                let mut acc = z.clone();
                for _ in 1..ek {
                    acc = &acc * &z;
                }
                acc
            });
            prod = &prod * factor;
        }
        terms.extend_from_slice(prod.terms());
    }
    Ok(SparsePolynomial::new(n_vars, degree, terms)?)
}
