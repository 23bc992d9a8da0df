//! Monte Carlo evaluation of the inversion solver on random sparse
//! polynomial maps whose global optimum is zero by construction.

use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{invert, ControllerConfig, PolynomialMap, SolverMode};
use crate::poly::{basis_size, enumerate_basis, Interval, SparsePolynomial};
use crate::repro::{content_hash, stream_rng};

pub const BENCHMARK_SCHEMA: &str = "polyinv-benchmark/1";

/// Reference results: `(m, d_p, n_s, E2, E_inf)`.
pub const PAPER_TABLE: [(usize, u32, usize, f64, f64); 20] = [
    (1, 1, 3, 1.2e-14, 3.2e-14),
    (1, 2, 6, 1.9e-13, 1.9e-12),
    (1, 4, 15, 2.1e-13, 1.4e-12),
    (1, 6, 28, 1.1e-13, 6.5e-13),
    (2, 1, 5, 4.3e-12, 1.6e-11),
    (2, 2, 15, 5.0e-3, 0.048),
    (2, 4, 45, 4.1e-3, 0.022),
    (2, 6, 81, 5.2e-3, 0.034),
    (4, 1, 9, 7.5e-5, 4.2e-4),
    (4, 2, 45, 8.2e-3, 0.039),
    (4, 4, 116, 0.013, 0.047),
    (4, 6, 197, 0.014, 0.046),
    (6, 1, 13, 4.3e-4, 9.7e-4),
    (6, 2, 81, 0.013, 0.048),
    (6, 4, 197, 0.016, 0.048),
    (6, 6, 339, 0.021, 0.049),
    (8, 1, 17, 5.0e-4, 8.6e-4),
    (8, 2, 116, 0.019, 0.048),
    (8, 4, 289, 0.027, 0.049),
    (8, 6, 500, 0.032, 0.049),
];

/// Nonzero-term count of the reference table for `(m, d_p)`.
pub fn paper_n_s(m: usize, d_p: u32) -> Option<usize> {
    PAPER_TABLE
        .iter()
        .find(|r| r.0 == m && r.1 == d_p)
        .map(|r| r.2)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchmarkError {
    #[error("cell (m = {m}, d_p = {d_p}): n_s = {n_s} must lie in 1..={available}")]
    TermCount {
        m: usize,
        d_p: u32,
        n_s: usize,
        available: u128,
    },
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Poly(#[from] crate::poly::PolyError),
}

/// `m` components over `2m` variables (decisions first, then the fixed
/// regressor), each with exactly `n_s` standard normal coefficients placed
/// uniformly without replacement in the degree-`d_p` basis.
pub fn random_sparse_polynomial<R: Rng>(
    m: usize,
    d_p: u32,
    n_s: usize,
    rng: &mut R,
) -> Result<Vec<SparsePolynomial>, BenchmarkError> {
    let basis = enumerate_basis(2 * m, d_p)?;
    random_sparse_from_basis(m, d_p, n_s, &basis, rng)
}

fn random_sparse_from_basis<R: Rng>(
    m: usize,
    d_p: u32,
    n_s: usize,
    basis: &[Vec<u32>],
    rng: &mut R,
) -> Result<Vec<SparsePolynomial>, BenchmarkError> {
    if n_s == 0 || n_s > basis.len() {
        return Err(BenchmarkError::TermCount {
            m,
            d_p,
            n_s,
            available: basis.len() as u128,
        });
    }
    (0..m)
        .map(|_| {
            let picks = sample(rng, basis.len(), n_s);
            let pairs: Vec<(&[u32], f64)> = picks
                .iter()
                .map(|i| {
                    // Keep every drawn term clear of the pruning threshold.
                    let c = loop {
                        let c: f64 = rng.sample(StandardNormal);
                        if c.abs() > 1e-6 {
                            break c;
                        }
                    };
                    (basis[i].as_slice(), c)
                })
                .collect();
            Ok(SparsePolynomial::from_pairs(2 * m, &pairs)?)
        })
        .collect()
}

/// Solver settings shared by every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_sweeps: usize,
    pub stop_tol: f64,
    pub n_restarts: usize,
    pub j_stop: Option<f64>,
    /// Use the convex quadratic solver for degree-one maps.
    pub affine_for_linear: bool,
    /// Sweep budget of the quadratic solver, whose sweeps are cheap but
    /// converge slowly on ill-conditioned maps.
    pub affine_max_sweeps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            stop_tol: 1e-12,
            n_restarts: 200,
            j_stop: Some(0.01),
            affine_for_linear: true,
            affine_max_sweeps: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub dims: Vec<usize>,
    pub degrees: Vec<u32>,
    /// `(m, d_p, n_s)` overrides; cells not listed use the reference table.
    #[serde(default)]
    pub n_s: Vec<(usize, u32, usize)>,
    pub main_trials: usize,
    pub sub_trials: usize,
    pub seed: u64,
    pub mu: f64,
    /// Half-width of the symmetric box and of the sampling support.
    pub box_half_width: f64,
    pub solver: SolverSettings,
}

impl BenchmarkConfig {
    pub fn paper() -> Self {
        Self {
            dims: vec![1, 2, 4, 6, 8],
            degrees: vec![1, 2, 4, 6],
            n_s: Vec::new(),
            main_trials: 50,
            sub_trials: 100,
            seed: 2016,
            mu: 0.0,
            box_half_width: 1.0,
            solver: SolverSettings::default(),
        }
    }

    pub fn desk() -> Self {
        Self {
            main_trials: 5,
            sub_trials: 20,
            ..Self::paper()
        }
    }

    pub fn n_s_for(&self, m: usize, d_p: u32) -> Option<usize> {
        self.n_s
            .iter()
            .find(|c| c.0 == m && c.1 == d_p)
            .map(|c| c.2)
            .or_else(|| paper_n_s(m, d_p))
    }

    pub fn validate(&self) -> Result<(), BenchmarkError> {
        if self.main_trials == 0 || self.sub_trials == 0 {
            return Err(BenchmarkError::InvalidConfig("trial counts must be at least 1".into()));
        }
        if !(self.mu >= 0.0) || !(self.box_half_width > 0.0) {
            return Err(BenchmarkError::InvalidConfig("mu >= 0 and a positive box are required".into()));
        }
        for &m in &self.dims {
            for &d in &self.degrees {
                let n_s = self.n_s_for(m, d).ok_or_else(|| {
                    BenchmarkError::InvalidConfig(format!("no n_s for m = {m}, d_p = {d}"))
                })?;
                let available = basis_size(2 * m, d);
                if m == 0 || n_s == 0 || n_s as u128 > available {
                    return Err(BenchmarkError::TermCount { m, d_p: d, n_s, available });
                }
            }
        }
        Ok(())
    }

    fn controller_config(&self, m: usize, d_p: u32, restart_seed: u64) -> ControllerConfig {
        let linear = d_p == 1 && self.solver.affine_for_linear;
        let mode = if linear { SolverMode::Affine } else { SolverMode::General };
        let mut cfg = ControllerConfig::uniform(mode, Interval::symmetric(self.box_half_width), m)
            .with_mu(self.mu);
        cfg.max_sweeps = self.solver.max_sweeps;
        cfg.stop_tol = self.solver.stop_tol;
        cfg.warm_start = false;
        if linear {
            cfg.max_sweeps = self.solver.affine_max_sweeps;
        } else {
            cfg.n_restarts = self.solver.n_restarts;
            cfg.restart_seed = restart_seed;
            cfg.j_stop = self.solver.j_stop;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub m: usize,
    pub d_p: u32,
    pub n_s: usize,
    pub e2: f64,
    pub e_inf: f64,
    pub t_solve_mean: f64,
    pub trials: usize,
    pub diverged: usize,
    pub flagged: bool,
    pub mean_sweeps: f64,
    pub mean_starts: f64,
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    gap: Option<f64>,
    seconds: f64,
    sweeps: usize,
    starts: usize,
}

fn run_trial(
    config: &BenchmarkConfig,
    map: &PolynomialMap,
    m: usize,
    d_p: u32,
    main: usize,
    sub: usize,
) -> TrialOutcome {
    let idx = [m as u64, d_p as u64, main as u64, sub as u64];
    let mut rng = stream_rng(config.seed, "benchmark/sample", &idx);
    let w = config.box_half_width;
    let x: Vec<f64> = (0..2 * m).map(|_| rng.random_range(-w..=w)).collect();
    let (u_true, q) = x.split_at(m);
    let comps = crate::controller::InverseModel::components(map);
    let r: Vec<f64> = comps
        .iter()
        .map(|f| f.eval(&x).expect("matching dimension"))
        .collect();
    let restart_seed: u64 = stream_rng(config.seed, "benchmark/restart", &idx).random();
    let cfg = config.controller_config(m, d_p, restart_seed);
    let j_true = config.mu * u_true.iter().map(|v| v * v).sum::<f64>();
    let start = Instant::now();
    let result = invert(map, &r, q, &cfg, None);
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(res) => TrialOutcome {
            gap: Some(res.objective - j_true),
            seconds,
            sweeps: res.sweeps_used,
            starts: res.starts,
        },
        Err(_) => TrialOutcome {
            gap: None,
            seconds,
            sweeps: 0,
            starts: 0,
        },
    }
}

/// Runs every main and sub trial of one `(m, d_p)` cell.
pub fn run_cell(config: &BenchmarkConfig, m: usize, d_p: u32) -> Result<BenchmarkCell, BenchmarkError> {
    let n_s = config
        .n_s_for(m, d_p)
        .ok_or_else(|| BenchmarkError::InvalidConfig(format!("no n_s for m = {m}, d_p = {d_p}")))?;
    let basis = enumerate_basis(2 * m, d_p)?;
    let maps: Vec<PolynomialMap> = (0..config.main_trials)
        .map(|main| {
            let mut rng = stream_rng(config.seed, "benchmark/poly", &[m as u64, d_p as u64, main as u64]);
            let comps = random_sparse_from_basis(m, d_p, n_s, &basis, &mut rng)?;
            Ok(PolynomialMap::new(comps, m, m).expect("well-formed map"))
        })
        .collect::<Result<_, BenchmarkError>>()?;
    let jobs: Vec<(usize, usize)> = (0..config.main_trials)
        .flat_map(|a| (0..config.sub_trials).map(move |b| (a, b)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(main, sub)| run_trial(config, &maps[main], m, d_p, main, sub))
        .collect();

    let gaps: Vec<f64> = outcomes.iter().filter_map(|o| o.gap).collect();
    let diverged = outcomes.len() - gaps.len();
    let n = gaps.len().max(1) as f64;
    let e2 = gaps.iter().sum::<f64>() / n;
    let e_inf = gaps.iter().copied().fold(0.0, f64::max);
    let trials = outcomes.len();
    Ok(BenchmarkCell {
        m,
        d_p,
        n_s,
        e2,
        e_inf,
        t_solve_mean: outcomes.iter().map(|o| o.seconds).sum::<f64>() / trials as f64,
        trials,
        diverged,
        flagged: diverged > 0 || gaps.iter().any(|&g| g < -1e-12),
        mean_sweeps: outcomes.iter().map(|o| o.sweeps as f64).sum::<f64>() / trials as f64,
        mean_starts: outcomes.iter().map(|o| o.starts as f64).sum::<f64>() / trials as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema: String,
    pub config: BenchmarkConfig,
    pub config_hash: String,
    /// Hash of everything except the timing columns.
    pub result_hash: String,
    pub cells: Vec<BenchmarkCell>,
    pub total_seconds: f64,
}

impl BenchmarkReport {
    pub fn cell(&self, m: usize, d_p: u32) -> Option<&BenchmarkCell> {
        self.cells.iter().find(|c| c.m == m && c.d_p == d_p)
    }

    pub fn flagged(&self) -> bool {
        self.cells.iter().any(|c| c.flagged)
    }

    /// Table with the reference columns `m, d_p, n_s, E2, E_inf, T_solve`.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["m", "d_p", "n_s", "E2", "E_inf", "T_solve", "mean_sweeps", "mean_starts", "diverged"])?;
        for c in &self.cells {
            w.write_record([
                c.m.to_string(),
                c.d_p.to_string(),
                c.n_s.to_string(),
                format!("{:.3e}", c.e2),
                format!("{:.3e}", c.e_inf),
                format!("{:.3e}", c.t_solve_mean),
                format!("{:.2}", c.mean_sweeps),
                format!("{:.2}", c.mean_starts),
                c.diverged.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn result_hash(config_hash: &str, cells: &[BenchmarkCell]) -> String {
    let timeless: Vec<BenchmarkCell> = cells
        .iter()
        .map(|c| BenchmarkCell {
            t_solve_mean: 0.0,
            ..c.clone()
        })
        .collect();
    content_hash(&(config_hash, timeless))
}

/// All configured cells, in `dims` x `degrees` order.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport, BenchmarkError> {
    config.validate()?;
    let start = Instant::now();
    let cells = config
        .dims
        .iter()
        .flat_map(|&m| config.degrees.iter().map(move |&d| (m, d)))
        .map(|(m, d)| run_cell(config, m, d))
        .collect::<Result<Vec<_>, _>>()?;
    let config_hash = content_hash(config);
    Ok(BenchmarkReport {
        schema: BENCHMARK_SCHEMA.into(),
        config: config.clone(),
        result_hash: result_hash(&config_hash, &cells),
        config_hash,
        cells,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}
