use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::poly::{univariate_min_on_interval, Interval, SparsePolynomial, UnivariatePolynomial};
use crate::repro::stream_rng;
use crate::sysid::PredictionModel;

use super::{ControlError, ControllerConfig, SolverMode};

/// Anything that maps `(decision, fixed)` variables to a vector of outputs
/// through polynomials. The decision variables come first in every
/// component's variable tuple.
pub trait InverseModel {
    fn components(&self) -> &[SparsePolynomial];
    /// Number of leading variables the solver may move.
    fn n_decision(&self) -> usize;
    /// Entries of the decision vector that form the applied command.
    fn command_dim(&self) -> usize;

    /// Horizon entries each decision variable stands for. The activity
    /// penalty counts every one of them.
    fn decision_multiplicity(&self) -> usize {
        1
    }

    fn n_fixed(&self) -> usize {
        self.components()
            .first()
            .map_or(0, |c| c.n_vars() - self.n_decision())
    }
}

impl InverseModel for PredictionModel {
    fn components(&self) -> &[SparsePolynomial] {
        PredictionModel::components(self)
    }

    fn n_decision(&self) -> usize {
        self.spec().n_decision()
    }

    fn command_dim(&self) -> usize {
        self.spec().input_dim
    }
}

/// A single-input model with every horizon command tied to one shared
/// value. The tie is substituted once here rather than at every solve,
/// which is what makes long horizons cheap in `simo_const` mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedCommandModel {
    components: Vec<SparsePolynomial>,
    multiplicity: usize,
}

impl SharedCommandModel {
    pub fn new<M: InverseModel + ?Sized>(model: &M) -> Result<Self, ControlError> {
        if model.command_dim() != 1 || model.decision_multiplicity() != 1 {
            return Err(ControlError::ModeMismatch(
                "a shared command needs a single-input model".into(),
            ));
        }
        let n = model.n_decision();
        let components = model
            .components()
            .iter()
            .map(|c| c.merge_leading(n))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            components,
            multiplicity: n,
        })
    }
}

impl InverseModel for SharedCommandModel {
    fn components(&self) -> &[SparsePolynomial] {
        &self.components
    }

    fn n_decision(&self) -> usize {
        1
    }

    fn command_dim(&self) -> usize {
        1
    }

    fn decision_multiplicity(&self) -> usize {
        self.multiplicity
    }
}

/// A bare vector of polynomials, used where there is no identified model
/// (solver benchmarks, tests).
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    components: Vec<SparsePolynomial>,
    n_decision: usize,
    command_dim: usize,
}

impl PolynomialMap {
    pub fn new(
        components: Vec<SparsePolynomial>,
        n_decision: usize,
        command_dim: usize,
    ) -> Result<Self, ControlError> {
        let n_vars = components
            .first()
            .map(SparsePolynomial::n_vars)
            .ok_or_else(|| ControlError::InvalidConfig("map has no components".into()))?;
        if components.iter().any(|c| c.n_vars() != n_vars) {
            return Err(ControlError::InvalidConfig(
                "components disagree on variable count".into(),
            ));
        }
        if n_decision == 0 || n_decision > n_vars || command_dim == 0 || command_dim > n_decision {
            return Err(ControlError::InvalidConfig(format!(
                "invalid split: {n_decision} decision variables, command size {command_dim}, {n_vars} variables"
            )));
        }
        Ok(Self {
            components,
            n_decision,
            command_dim,
        })
    }
}

impl InverseModel for PolynomialMap {
    fn components(&self) -> &[SparsePolynomial] {
        &self.components
    }

    fn n_decision(&self) -> usize {
        self.n_decision
    }

    fn command_dim(&self) -> usize {
        self.command_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub u_star: Vec<f64>,
    pub objective: f64,
    /// Coordinate sweeps summed over all starts.
    pub sweeps_used: usize,
    /// First `command_dim` entries of `u_star`.
    pub applied_command: Vec<f64>,
    pub starts: usize,
}

/// Emitted after every accepted coordinate update.
#[derive(Debug)]
pub struct UpdateEvent<'a> {
    pub start: usize,
    pub sweep: usize,
    pub coordinate: usize,
    pub u: &'a [f64],
    pub objective: f64,
}

fn check_inputs<M: InverseModel + ?Sized>(
    model: &M,
    u_len: usize,
    r_plus: &[f64],
    q_minus: &[f64],
) -> Result<(), ControlError> {
    if u_len != model.n_decision() {
        return Err(ControlError::Dimension {
            what: "command sequence",
            expected: model.n_decision(),
            got: u_len,
        });
    }
    if r_plus.len() != model.components().len() {
        return Err(ControlError::Dimension {
            what: "reference",
            expected: model.components().len(),
            got: r_plus.len(),
        });
    }
    if q_minus.len() != model.n_fixed() {
        return Err(ControlError::Dimension {
            what: "regressor",
            expected: model.n_fixed(),
            got: q_minus.len(),
        });
    }
    Ok(())
}

/// `||r - f(u, q)||^2 + mu ||u||^2`.
pub fn cost<M: InverseModel + ?Sized>(
    model: &M,
    u: &[f64],
    r_plus: &[f64],
    q_minus: &[f64],
    mu: f64,
) -> Result<f64, ControlError> {
    check_inputs(model, u.len(), r_plus, q_minus)?;
    let x: Vec<f64> = u.iter().chain(q_minus).copied().collect();
    let tracking: f64 = model
        .components()
        .iter()
        .zip(r_plus)
        .map(|(f, r)| (r - f.eval(&x).expect("checked dimensions")).powi(2))
        .sum();
    let weight = mu * model.decision_multiplicity() as f64;
    Ok(tracking + weight * u.iter().map(|v| v * v).sum::<f64>())
}

/// The cost as a univariate polynomial in coordinate `k`, every other
/// coordinate held at its value in `u`.
pub fn cost_restriction<M: InverseModel + ?Sized>(
    model: &M,
    u: &[f64],
    r_plus: &[f64],
    q_minus: &[f64],
    mu: f64,
    k: usize,
) -> Result<UnivariatePolynomial, ControlError> {
    check_inputs(model, u.len(), r_plus, q_minus)?;
    if k >= u.len() {
        return Err(ControlError::Dimension {
            what: "coordinate index",
            expected: u.len(),
            got: k,
        });
    }
    let mu = mu * model.decision_multiplicity() as f64;
    let x: Vec<f64> = u.iter().chain(q_minus).copied().collect();
    let mut acc = UnivariatePolynomial::default();
    for (f, &r) in model.components().iter().zip(r_plus) {
        let q = f.restrict_to_coordinate(&x, k)?;
        let diff = &UnivariatePolynomial::constant(r) - &q;
        acc = &acc + &diff.square();
    }
    let others: f64 = u
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, v)| v * v)
        .sum();
    Ok(&acc + &UnivariatePolynomial::new(vec![mu * others, 0.0, mu]))
}

/// Model components with the regressor substituted, flattened for fast
/// coordinate restriction.
struct Reduced {
    n: usize,
    exps: Vec<Vec<u8>>,
    coeffs: Vec<Vec<f64>>,
    max_deg: usize,
}

impl Reduced {
    fn new(polys: &[SparsePolynomial]) -> Self {
        let n = polys[0].n_vars();
        let mut max_deg = 0;
        let mut exps = Vec::with_capacity(polys.len());
        let mut coeffs = Vec::with_capacity(polys.len());
        for p in polys {
            let mut e = Vec::with_capacity(p.len() * n);
            let mut c = Vec::with_capacity(p.len());
            for t in p.terms() {
                for &x in &t.exponents {
                    max_deg = max_deg.max(x as usize);
                    e.push(x as u8);
                }
                c.push(t.coefficient);
            }
            exps.push(e);
            coeffs.push(c);
        }
        Self {
            n,
            exps,
            coeffs,
            max_deg,
        }
    }

    fn powers(&self, u: &[f64]) -> Vec<Vec<f64>> {
        u.iter().map(|&v| power_row(v, self.max_deg)).collect()
    }

    fn eval(&self, pw: &[Vec<f64>], j: usize) -> f64 {
        let n = self.n;
        self.coeffs[j]
            .iter()
            .enumerate()
            .map(|(t, &c)| {
                let e = &self.exps[j][t * n..(t + 1) * n];
                e.iter()
                    .enumerate()
                    .fold(c, |acc, (v, &ev)| acc * pw[v][ev as usize])
            })
            .sum()
    }

    fn objective(&self, pw: &[Vec<f64>], u: &[f64], r: &[f64], mu: f64) -> f64 {
        let tracking: f64 = (0..r.len()).map(|j| (r[j] - self.eval(pw, j)).powi(2)).sum();
        tracking + mu * u.iter().map(|v| v * v).sum::<f64>()
    }

    // Cost restricted to coordinate k, built from the power tables.
    fn cost_in(&self, pw: &[Vec<f64>], u: &[f64], r: &[f64], mu: f64, k: usize) -> UnivariatePolynomial {
        let n = self.n;
        let mut total = vec![0.0; 2 * self.max_deg + 3];
        let mut q = vec![0.0; self.max_deg + 1];
        for (j, &rj) in r.iter().enumerate() {
            q.iter_mut().for_each(|v| *v = 0.0);
            let mut top = 0;
            for (t, &c) in self.coeffs[j].iter().enumerate() {
                let e = &self.exps[j][t * n..(t + 1) * n];
                let mut v = c;
                for (i, &ei) in e.iter().enumerate() {
                    if i != k {
                        v *= pw[i][ei as usize];
                    }
                }
                let ek = e[k] as usize;
                q[ek] += v;
                top = top.max(ek);
            }
            q[0] -= rj;
            for a in 0..=top {
                if q[a] == 0.0 {
                    continue;
                }
                for b in 0..=top {
                    total[a + b] += q[a] * q[b];
                }
            }
        }
        let others: f64 = u
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, v)| v * v)
            .sum();
        total[0] += mu * others;
        total[2] += mu;
        UnivariatePolynomial::new(total)
    }
}

fn power_row(v: f64, max_deg: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(max_deg + 1);
    let mut acc = 1.0;
    for _ in 0..=max_deg {
        row.push(acc);
        acc *= v;
    }
    row
}

struct Problem<'a> {
    r: &'a [f64],
    mu: f64,
    bounds: &'a [Interval],
    config: &'a ControllerConfig,
}

/// Solves `min_{u in box} ||r - f(u, q)||^2 + mu ||u||^2` by exact coordinate
/// minimization and reports the receding-horizon command.
pub fn invert<M: InverseModel + ?Sized>(
    model: &M,
    r_plus: &[f64],
    q_minus: &[f64],
    config: &ControllerConfig,
    u_init: Option<&[f64]>,
) -> Result<InversionResult, ControlError> {
    invert_observed(model, r_plus, q_minus, config, u_init, &mut |_| {})
}

/// [`invert`] with a callback after every accepted coordinate update.
pub fn invert_observed<M: InverseModel + ?Sized>(
    model: &M,
    r_plus: &[f64],
    q_minus: &[f64],
    config: &ControllerConfig,
    u_init: Option<&[f64]>,
    observer: &mut dyn FnMut(&UpdateEvent),
) -> Result<InversionResult, ControlError> {
    config.validate()?;
    let n = model.n_decision();
    check_inputs(model, n, r_plus, q_minus)?;
    let expected_box = if config.mode == SolverMode::SimoConst { 1 } else { n };
    if config.bounds.len() != expected_box {
        return Err(ControlError::Dimension {
            what: "box",
            expected: expected_box,
            got: config.bounds.len(),
        });
    }
    let reduced: Vec<SparsePolynomial> = model
        .components()
        .iter()
        .map(|f| {
            if q_minus.is_empty() {
                Ok(f.clone())
            } else {
                f.substitute_tail(q_minus)
            }
        })
        .collect::<Result<_, _>>()?;
    let problem = Problem {
        r: r_plus,
        mu: config.mu * model.decision_multiplicity() as f64,
        bounds: &config.bounds,
        config,
    };

    let (u_star, objective, sweeps, starts) = match config.mode {
        SolverMode::SimoConst => {
            if model.command_dim() != 1 {
                return Err(ControlError::ModeMismatch(
                    "simo_const needs a single command input".into(),
                ));
            }
            let (u, j) = solve_simo(&reduced, &problem, n)?;
            observer(&UpdateEvent {
                start: 0,
                sweep: 1,
                coordinate: 0,
                u: &u,
                objective: j,
            });
            (u, j, 1, 1)
        }
        SolverMode::Affine => {
            let u0 = initial_point(&problem, u_init, n)?;
            let (u, j, s) = solve_affine(&reduced, &problem, u0, observer)?;
            (u, j, s, 1)
        }
        SolverMode::General => {
            let compiled = Reduced::new(&reduced);
            let u0 = initial_point(&problem, u_init, n)?;
            let (mut best_u, mut best_j, mut sweeps) =
                coordinate_descent(&compiled, &problem, u0, 0, observer)?;
            let mut starts = 1;
            let mut rng = stream_rng(config.restart_seed, "restart", &[]);
            for s in 1..=config.n_restarts {
                if config.j_stop.is_some_and(|stop| best_j <= stop) {
                    break;
                }
                let u0: Vec<f64> = config
                    .bounds
                    .iter()
                    .map(|b| {
                        if b.width() > 0.0 {
                            rng.random_range(b.lo()..=b.hi())
                        } else {
                            b.lo()
                        }
                    })
                    .collect();
                let (u, j, sw) = coordinate_descent(&compiled, &problem, u0, s, observer)?;
                sweeps += sw;
                starts += 1;
                if j < best_j {
                    best_u = u;
                    best_j = j;
                }
            }
            (best_u, best_j, sweeps, starts)
        }
    };
    if !objective.is_finite() {
        return Err(ControlError::Diverged);
    }
    let applied_command = u_star[..model.command_dim()].to_vec();
    Ok(InversionResult {
        u_star,
        objective,
        sweeps_used: sweeps,
        applied_command,
        starts,
    })
}

fn initial_point(
    problem: &Problem,
    u_init: Option<&[f64]>,
    n: usize,
) -> Result<Vec<f64>, ControlError> {
    match u_init {
        None => Ok(problem.bounds.iter().map(Interval::midpoint).collect()),
        Some(u) => {
            if u.len() != n {
                return Err(ControlError::Dimension {
                    what: "initial point",
                    expected: n,
                    got: u.len(),
                });
            }
            if let Some(k) = (0..n).find(|&k| !problem.bounds[k].contains(u[k])) {
                return Err(ControlError::InfeasibleStart { coordinate: k });
            }
            Ok(u.to_vec())
        }
    }
}

fn coordinate_descent(
    c: &Reduced,
    problem: &Problem,
    mut u: Vec<f64>,
    start: usize,
    observer: &mut dyn FnMut(&UpdateEvent),
) -> Result<(Vec<f64>, f64, usize), ControlError> {
    let cfg = problem.config;
    let mut pw = c.powers(&u);
    let mut j = c.objective(&pw, &u, problem.r, problem.mu);
    if !j.is_finite() {
        return Err(ControlError::Diverged);
    }
    let mut sweeps = 0;
    for sweep in 1..=cfg.max_sweeps {
        sweeps = sweep;
        let j_start = j;
        for k in 0..u.len() {
            let q = c.cost_in(&pw, &u, problem.r, problem.mu, k);
            if q.is_constant() {
                continue;
            }
            let current = q.eval(u[k]);
            let (t, v) = univariate_min_on_interval(&q, problem.bounds[k])?;
            if v < current {
                u[k] = t;
                pw[k] = power_row(t, c.max_deg);
                observer(&UpdateEvent {
                    start,
                    sweep,
                    coordinate: k,
                    u: &u,
                    objective: v,
                });
            }
        }
        j = c.objective(&pw, &u, problem.r, problem.mu);
        if !j.is_finite() {
            return Err(ControlError::Diverged);
        }
        if j_start - j < cfg.stop_tol || cfg.j_stop.is_some_and(|stop| j <= stop) {
            break;
        }
    }
    Ok((u, j, sweeps))
}

fn solve_simo(
    reduced: &[SparsePolynomial],
    problem: &Problem,
    n: usize,
) -> Result<(Vec<f64>, f64), ControlError> {
    let mut q = UnivariatePolynomial::new(vec![0.0, 0.0, problem.mu * n as f64]);
    for (f, &r) in reduced.iter().zip(problem.r) {
        let diff = &UnivariatePolynomial::constant(r) - &f.along_diagonal();
        q = &q + &diff.square();
    }
    let (t, v) = univariate_min_on_interval(&q, problem.bounds[0])?;
    Ok((vec![t; n], v))
}

// Splits each reduced component into b_j + sum_i A_ji u_i.
fn affine_parts(reduced: &[SparsePolynomial], n: usize) -> Result<(DMatrix<f64>, DVector<f64>), ControlError> {
    let mut a = DMatrix::zeros(reduced.len(), n);
    let mut b = DVector::zeros(reduced.len());
    for (j, f) in reduced.iter().enumerate() {
        for t in f.terms() {
            match t.total_degree() {
                0 => b[j] += t.coefficient,
                1 => {
                    let i = t.exponents.iter().position(|&e| e == 1).expect("degree one");
                    a[(j, i)] += t.coefficient;
                }
                d => {
                    return Err(ControlError::ModeMismatch(format!(
                        "affine mode needs degree <= 1 in the commands, found degree {d}"
                    )))
                }
            }
        }
    }
    Ok((a, b))
}

fn solve_affine(
    reduced: &[SparsePolynomial],
    problem: &Problem,
    mut u: Vec<f64>,
    observer: &mut dyn FnMut(&UpdateEvent),
) -> Result<(Vec<f64>, f64, usize), ControlError> {
    let n = u.len();
    let (a, b) = affine_parts(reduced, n)?;
    let resid0 = DVector::from_column_slice(problem.r) - &b;
    let mut h = a.tr_mul(&a);
    for i in 0..n {
        h[(i, i)] += problem.mu;
    }
    let g = a.tr_mul(&resid0);
    let c0 = resid0.norm_squared();
    let exact = |u: &DVector<f64>| c0 - 2.0 * g.dot(u) + u.dot(&(&h * u));

    let mut uv = DVector::from_column_slice(&u);
    let mut hu = &h * &uv;
    let mut j = exact(&uv);
    let cfg = problem.config;
    let mut sweeps = 0;
    for sweep in 1..=cfg.max_sweeps {
        sweeps = sweep;
        let j_start = j;
        for k in 0..n {
            let hkk = h[(k, k)];
            let grad = 2.0 * (hu[k] - g[k]);
            let uk = uv[k];
            let q = UnivariatePolynomial::new(vec![
                j - grad * uk + hkk * uk * uk,
                grad - 2.0 * hkk * uk,
                hkk,
            ]);
            if q.is_constant() {
                continue;
            }
            let current = q.eval(uk);
            let (t, v) = univariate_min_on_interval(&q, problem.bounds[k])?;
            if v < current {
                let delta = t - uk;
                uv[k] = t;
                hu.axpy(delta, &h.column(k), 1.0);
                j = v;
                u[k] = t;
                observer(&UpdateEvent {
                    start: 0,
                    sweep,
                    coordinate: k,
                    u: &u,
                    objective: v,
                });
            }
        }
        // Refresh to shed accumulated round-off.
        hu = &h * &uv;
        j = exact(&uv);
        if !j.is_finite() {
            return Err(ControlError::Diverged);
        }
        if j_start - j < cfg.stop_tol || cfg.j_stop.is_some_and(|stop| j <= stop) {
            break;
        }
    }
    // Report the objective through the residual form, which cannot go
    // slightly negative the way the expanded quadratic can.
    let resid = &resid0 - &a * &uv;
    let objective = resid.norm_squared() + problem.mu * uv.norm_squared();
    Ok((u, objective, sweeps))
}
