//! Online inversion of a polynomial predictor by exact coordinate
//! minimization, and the receding-horizon control law built on it.

mod config;
mod solver;

pub use config::{ControllerConfig, SolverMode};
pub use solver::{
    cost, cost_restriction, invert, invert_observed, InverseModel, InversionResult,
    PolynomialMap, SharedCommandModel, UpdateEvent,
};

use crate::poly::PolyError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error("solver mode does not fit the model: {0}")]
    ModeMismatch(String),
    #[error("initial point leaves the box at coordinate {coordinate}")]
    InfeasibleStart { coordinate: usize },
    #[error("model evaluation produced a non-finite objective")]
    Diverged,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Per-loop state carried between control steps.
#[derive(Debug, Clone, Default)]
pub struct ControllerMemory {
    previous: Option<Vec<f64>>,
}

impl ControllerMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn previous(&self) -> Option<&[f64]> {
        self.previous.as_deref()
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }
}

/// The previous optimum advanced one step: drop the first command, repeat
/// the last one, and clamp into the box.
pub fn shifted_warm_start(previous: &[f64], command_dim: usize, config: &ControllerConfig) -> Vec<f64> {
    let n = previous.len();
    let mut next = Vec::with_capacity(n);
    next.extend_from_slice(&previous[command_dim.min(n)..]);
    next.extend_from_slice(&previous[n - command_dim.min(n)..]);
    next.iter()
        .zip(&config.bounds)
        .map(|(v, b)| b.clamp(*v))
        .collect()
}

/// One sampling instant of the receding-horizon law: solve the inversion,
/// apply the first command, remember the optimum for the next warm start.
pub fn control_step<M: InverseModel + ?Sized>(
    model: &M,
    r_plus: &[f64],
    q_minus: &[f64],
    config: &ControllerConfig,
    memory: &mut ControllerMemory,
) -> Result<(Vec<f64>, InversionResult), ControlError> {
    let init = match (&memory.previous, config.warm_start, config.mode) {
        (Some(prev), true, SolverMode::General | SolverMode::Affine)
            if prev.len() == model.n_decision() =>
        {
            Some(shifted_warm_start(prev, model.command_dim(), config))
        }
        _ => None,
    };
    let result = invert(model, r_plus, q_minus, config, init.as_deref())?;
    memory.previous = Some(result.u_star.clone());
    Ok((result.applied_command.clone(), result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Interval, SparsePolynomial};
    use crate::sysid::{fit, ModelSpec, SystemData};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(components: Vec<SparsePolynomial>, n_decision: usize) -> PolynomialMap {
        PolynomialMap::new(components, n_decision, 1).unwrap()
    }

    #[test]
    fn cost_examples() {
        let ident = map(vec![SparsePolynomial::variable(1, 0)], 1);
        assert_eq!(cost(&ident, &[0.4], &[0.4], &[], 0.0).unwrap(), 0.0);
        let zero = map(vec![SparsePolynomial::zero(1, 1); 2], 1);
        assert_eq!(cost(&zero, &[0.3], &[1.0, 1.0], &[], 0.0).unwrap(), 2.0);
        let zero1 = map(vec![SparsePolynomial::zero(1, 1)], 1);
        assert_eq!(cost(&zero1, &[2.0], &[0.0], &[], 1.0).unwrap(), 4.0);
        assert!(cost(&zero1, &[2.0, 1.0], &[0.0], &[], 1.0).is_err());
    }

    #[test]
    fn restriction_examples() {
        let sq = map(vec![SparsePolynomial::from_pairs(1, &[(&[2], 1.0)]).unwrap()], 1);
        let q = cost_restriction(&sq, &[0.7], &[0.0], &[], 0.0, 0).unwrap();
        assert_eq!(q.coefficients(), &[0.0, 0.0, 0.0, 0.0, 1.0]);

        let aff = map(
            vec![SparsePolynomial::from_pairs(3, &[(&[1, 0, 0], 2.0), (&[0, 1, 1], -1.0), (&[0, 0, 1], 3.0)])
                .unwrap()],
            2,
        );
        for k in 0..2 {
            let q = cost_restriction(&aff, &[0.1, -0.2], &[1.0], &[0.5], 0.3, k).unwrap();
            assert!(q.degree() <= 2);
        }
    }

    #[test]
    fn restriction_matches_cost_on_fitted_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0];
        for t in 1..300 {
            y.push(0.6 * y[t - 1] + u[t - 1] - 0.3 * u[t - 1].powi(3) + 0.05 * rng.random_range(-1.0..1.0));
        }
        let data = SystemData::siso(&u, &y, 0.1).unwrap();
        let model = fit(&data, &ModelSpec::new(2, 3, 3, 1, 1)).unwrap();
        let q_minus: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u0: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        for k in 0..3 {
            let q = cost_restriction(&model, &u0, &r, &q_minus, 0.01, k).unwrap();
            for _ in 0..20 {
                let t = rng.random_range(-1.0..1.0);
                let mut v = u0.clone();
                v[k] = t;
                let direct = cost(&model, &v, &r, &q_minus, 0.01).unwrap();
                assert!((q.eval(t) - direct).abs() <= 1e-9 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn affine_sum_reaches_exact_match() {
        let f = SparsePolynomial::from_pairs(2, &[(&[1, 0], 1.0), (&[0, 1], 1.0)]).unwrap();
        let m = map(vec![f], 2);
        let cfg = ControllerConfig::uniform(SolverMode::Affine, Interval::new(0.0, 1.0).unwrap(), 2);
        let res = invert(&m, &[2.0], &[], &cfg, Some(&[0.0, 0.0])).unwrap();
        assert_eq!(res.u_star, vec![1.0, 1.0]);
        assert!(res.objective.abs() < 1e-15);
        let gen = ControllerConfig { mode: SolverMode::General, ..cfg };
        let res = invert(&m, &[2.0], &[], &gen, Some(&[0.0, 0.0])).unwrap();
        assert_eq!(res.u_star, vec![1.0, 1.0]);
    }

    #[test]
    fn simo_cube_root() {
        let f = SparsePolynomial::from_pairs(1, &[(&[3], 1.0)]).unwrap();
        let m = map(vec![f], 1);
        let cfg = ControllerConfig::new(SolverMode::SimoConst, vec![Interval::new(0.0, 3.0).unwrap()]);
        let res = invert(&m, &[8.0], &[], &cfg, None).unwrap();
        assert!((res.u_star[0] - 2.0).abs() < 1e-12);
        assert!(res.objective < 1e-20);
        assert_eq!(res.sweeps_used, 1);
    }

    #[test]
    fn simo_shares_one_value_over_horizon() {
        // Three steps, each output u_i^3 + u_i.
        let comps = (0..3)
            .map(|i| {
                let mut e = [0u32; 3];
                e[i] = 3;
                let mut l = [0u32; 3];
                l[i] = 1;
                SparsePolynomial::from_pairs(3, &[(&e, 1.0), (&l, 1.0)]).unwrap()
            })
            .collect();
        let m = map(comps, 3);
        let cfg = ControllerConfig::new(SolverMode::SimoConst, vec![Interval::symmetric(2.0)]);
        let res = invert(&m, &[2.0, 2.0, 2.0], &[], &cfg, None).unwrap();
        assert!(res.u_star.iter().all(|&v| (v - 1.0).abs() < 1e-10));
        assert_eq!(res.applied_command.len(), 1);
    }

    #[test]
    fn shared_command_model_matches_full_simo_solve() {
        // Two horizon steps over (u0, u1, q): u0^2 q + u1 and u0 u1 - q.
        let a = SparsePolynomial::from_pairs(3, &[(&[2, 0, 1], 1.0), (&[0, 1, 0], 1.0)]).unwrap();
        let b = SparsePolynomial::from_pairs(3, &[(&[1, 1, 0], 1.0), (&[0, 0, 1], -1.0)]).unwrap();
        let full = map(vec![a, b], 2);
        let shared = SharedCommandModel::new(&full).unwrap();
        assert_eq!(shared.n_decision(), 1);
        assert_eq!(shared.decision_multiplicity(), 2);
        let cfg = ControllerConfig::new(SolverMode::SimoConst, vec![Interval::new(-1.0, 2.0).unwrap()]).with_mu(0.3);
        let (r, q) = ([1.5, 0.2], [0.7]);
        let x = invert(&full, &r, &q, &cfg, None).unwrap();
        let y = invert(&shared, &r, &q, &cfg, None).unwrap();
        assert!((x.u_star[0] - y.u_star[0]).abs() < 1e-12);
        assert!((x.objective - y.objective).abs() < 1e-12);
        assert_eq!(x.applied_command, y.applied_command);
        let c = cost(&shared, &y.u_star, &r, &q, 0.3).unwrap();
        assert!((c - cost(&full, &x.u_star, &r, &q, 0.3).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn affine_mode_rejects_nonlinear_model() {
        let f = SparsePolynomial::from_pairs(1, &[(&[2], 1.0)]).unwrap();
        let m = map(vec![f], 1);
        let cfg = ControllerConfig::uniform(SolverMode::Affine, Interval::symmetric(1.0), 1);
        assert!(matches!(invert(&m, &[1.0], &[], &cfg, None), Err(ControlError::ModeMismatch(_))));
    }

    #[test]
    fn errors_on_bad_box_and_start() {
        let f = SparsePolynomial::variable(2, 0);
        let m = map(vec![f], 1);
        let cfg = ControllerConfig::uniform(SolverMode::General, Interval::symmetric(1.0), 2);
        assert!(matches!(
            invert(&m, &[0.0], &[0.0], &cfg, None),
            Err(ControlError::Dimension { what: "box", .. })
        ));
        let cfg = ControllerConfig::uniform(SolverMode::General, Interval::symmetric(1.0), 1);
        assert!(matches!(
            invert(&m, &[0.0], &[0.0], &cfg, Some(&[3.0])),
            Err(ControlError::InfeasibleStart { coordinate: 0 })
        ));
        assert!(invert(&m, &[0.0], &[], &cfg, None).is_err());
    }

    #[test]
    fn overflowing_model_reports_divergence() {
        let f = SparsePolynomial::from_pairs(2, &[(&[1, 0], 1e300), (&[0, 1], 1e300)]).unwrap();
        let m = map(vec![f], 1);
        let cfg = ControllerConfig::uniform(SolverMode::General, Interval::symmetric(1.0), 1);
        assert!(matches!(invert(&m, &[0.0], &[1e10], &cfg, None), Err(ControlError::Diverged)));
    }

    #[test]
    fn first_step_starts_at_midpoint_and_applies_first_entry() {
        // Three decoupled steps, f_i = u_i, no regressor.
        let comps = (0..3).map(|i| SparsePolynomial::variable(3, i)).collect();
        let m = map(comps, 3);
        let cfg = ControllerConfig::uniform(SolverMode::General, Interval::symmetric(1.0), 3);
        let mut seen = Vec::new();
        invert_observed(&m, &[0.2, -0.4, 0.6], &[], &cfg, None, &mut |ev| {
            seen.push(ev.u.to_vec());
        })
        .unwrap();
        // The first update moves coordinate 0 away from the zero midpoint.
        assert_eq!(seen[0][1..], [0.0, 0.0]);

        let mut mem = ControllerMemory::new();
        let (cmd, res) = control_step(&m, &[0.2, -0.4, 0.6], &[], &cfg, &mut mem).unwrap();
        assert_eq!(cmd, vec![res.u_star[0]]);
        assert!((cmd[0] - 0.2).abs() < 1e-12);
        assert_eq!(mem.previous(), Some(res.u_star.as_slice()));
    }

    #[test]
    fn warm_start_is_shifted_and_converged_start_needs_one_sweep() {
        let cfg = ControllerConfig::uniform(SolverMode::General, Interval::symmetric(1.0), 3);
        assert_eq!(shifted_warm_start(&[0.1, 0.2, 0.3], 1, &cfg), vec![0.2, 0.3, 0.3]);

        // Horizon of one: the shifted start equals the previous optimum.
        let f = SparsePolynomial::from_pairs(2, &[(&[3, 0], 1.0), (&[1, 1], 0.5), (&[0, 1], 1.0)]).unwrap();
        let m = map(vec![f], 1);
        let cfg = ControllerConfig::uniform(SolverMode::General, Interval::symmetric(2.0), 1);
        let mut mem = ControllerMemory::new();
        let (_, first) = control_step(&m, &[0.7], &[0.3], &cfg, &mut mem).unwrap();
        let (_, second) = control_step(&m, &[0.7], &[0.3], &cfg, &mut mem).unwrap();
        assert_eq!(second.sweeps_used, 1);
        assert!((second.objective - first.objective).abs() <= cfg.stop_tol);
    }

    #[test]
    fn restarts_never_worsen_and_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let comps: Vec<SparsePolynomial> = (0..2)
            .map(|_| {
                let pairs: Vec<(Vec<u32>, f64)> = crate::poly::enumerate_basis(2, 4)
                    .unwrap()
                    .into_iter()
                    .map(|e| (e, rng.random_range(-1.0..1.0)))
                    .collect();
                let refs: Vec<(&[u32], f64)> = pairs.iter().map(|(e, c)| (e.as_slice(), *c)).collect();
                SparsePolynomial::from_pairs(2, &refs).unwrap()
            })
            .collect();
        let m = map(comps, 2);
        let base = ControllerConfig::uniform(SolverMode::General, Interval::symmetric(1.0), 2);
        let single = invert(&m, &[0.5, -0.5], &[], &base, None).unwrap();
        let multi_cfg = ControllerConfig {
            n_restarts: 10,
            restart_seed: 99,
            ..base
        };
        let multi = invert(&m, &[0.5, -0.5], &[], &multi_cfg, None).unwrap();
        let again = invert(&m, &[0.5, -0.5], &[], &multi_cfg, None).unwrap();
        assert!(multi.objective <= single.objective);
        assert_eq!(multi, again);
        assert_eq!(multi.starts, 11);
    }
}
