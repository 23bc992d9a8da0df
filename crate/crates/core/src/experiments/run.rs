use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::{Excitation, ExperimentConfig, InsulinSchedule, NoiseSpec, Policy, ReferenceSpec, Scenario};
use super::report::{ExperimentReport, FitSummary, ScenarioResult, Timing, Trajectory, TrialReport};
use super::{rms, ExperimentError};
use crate::controller::{control_step, ControllerConfig, ControllerMemory, InverseModel, SharedCommandModel, SolverMode};
use crate::plants::signals::{pulse_sum, Multisine, Pulse, SignalKind, SignalSpec};
use crate::plants::{OdePlant, PlantError};
use crate::repro::stream_rng;
use crate::sysid::{fit, regressor_at, PredictionModel, SystemData};

/// Every random stream of the design run is labelled with this prefix and
/// every closed-loop test stream with the other one, so identification data
/// and test signals never share a generator.
pub const DATA_STREAM_PREFIX: &str = "data/";
pub const TEST_STREAM_PREFIX: &str = "test/";

/// Names of the random streams drawn by a design run.
pub const DATA_STREAMS: [&str; 4] = ["meals", "excitation", "silent", "noise"];
/// Names of the random streams drawn by each closed-loop scenario.
pub const TEST_STREAMS: [&str; 5] = ["reference", "disturbance", "meals", "input", "noise"];

pub fn data_label(what: &str) -> String {
    format!("{DATA_STREAM_PREFIX}{what}")
}

pub fn test_label(sc: &Scenario, what: &str) -> String {
    format!("{TEST_STREAM_PREFIX}{}/{what}", sc.stream_label())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured trial count.
    pub trials: Option<usize>,
    /// Worker threads; the global rayon pool when unset.
    pub threads: Option<usize>,
    /// Keep the trajectories of trial 0 in the report.
    pub keep_trajectories: bool,
}

fn stream_seed(cfg: &ExperimentConfig, label: &str, trial: usize) -> u64 {
    stream_rng(cfg.seed, label, &[trial as u64]).random()
}

fn signal(cfg: &ExperimentConfig, label: &str, trial: usize, kind: &SignalKind) -> SignalSpec {
    SignalSpec::new(stream_seed(cfg, label, trial), kind.clone())
}

/// Open-loop identification record of one trial.
#[derive(Debug, Clone)]
pub struct DesignRun {
    /// Commands and noisy measurements in model units.
    pub data: SystemData,
    /// Noise-free outputs, physical units.
    pub clean: Vec<Vec<f64>>,
    pub output_mid: Vec<f64>,
    pub output_range: Vec<f64>,
    pub output_std: Vec<f64>,
    /// Largest command per channel, model units.
    pub input_max: Vec<f64>,
    /// Set when the plant blew up; `data` is then truncated.
    pub flag: Option<String>,
}

struct Meals {
    pulses: Vec<Pulse>,
    decay: f64,
}

impl Meals {
    fn realize(spec: Option<SignalSpec>) -> Result<Option<Self>, ExperimentError> {
        let Some(spec) = spec else { return Ok(None) };
        let decay = match &spec.kind {
            SignalKind::MealTrain(p) => p.decay,
            _ => return Err(ExperimentError::Config("meals must be a meal_train signal".into())),
        };
        Ok(Some(Self {
            pulses: spec.meal_pulses()?,
            decay,
        }))
    }

    fn at(&self, t: f64) -> f64 {
        pulse_sum(&self.pulses, self.decay, t)
    }
}

struct Noise {
    rng: ChaCha8Rng,
    spec: NoiseSpec,
    scale: Vec<f64>,
}

impl Noise {
    fn sample(&mut self, n_y: usize) -> Vec<f64> {
        (0..n_y)
            .map(|j| match self.spec {
                NoiseSpec::None => 0.0,
                NoiseSpec::Relative { ratio } => {
                    let sd = ratio * self.scale[j];
                    if sd > 0.0 {
                        Normal::new(0.0, sd).expect("positive sd").sample(&mut self.rng)
                    } else {
                        0.0
                    }
                }
                NoiseSpec::Uniform { amplitude } if amplitude > 0.0 => self.rng.random_range(-amplitude..=amplitude),
                NoiseSpec::Uniform { .. } => 0.0,
            })
            .collect()
    }
}

/// Basal segments with random levels and lengths plus a bolus before each
/// meal. Plant time is in minutes.
fn insulin_rates(s: &InsulinSchedule, meals: Option<&Meals>, n: usize, ts: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut rates = Vec::with_capacity(n);
    let (mut next, mut level) = (0.0, s.basal);
    for k in 0..n {
        let t = k as f64 * ts;
        if t >= next {
            level = s.basal * rng.random_range(s.basal_factor.0..=s.basal_factor.1);
            next += 60.0 * rng.random_range(s.basal_hold_hours.0..=s.basal_hold_hours.1);
        }
        rates.push(level);
    }
    for meal in meals.into_iter().flat_map(|m| m.pulses.iter()).filter(|p| p.weight > 0.0) {
        let size = s.bolus * rng.random_range(s.bolus_factor.0..=s.bolus_factor.1);
        let start = meal.onset - s.lead_minutes;
        for (k, r) in rates.iter_mut().enumerate() {
            let t = k as f64 * ts;
            if t >= start && t < start + s.bolus_minutes {
                *r += size;
            }
        }
    }
    rates
}

enum Source<'a> {
    Samples(Vec<Vec<f64>>),
    Guarded(Multisine),
    Zero,
    Controller {
        model: &'a dyn InverseModel,
        order: usize,
        horizon: usize,
        config: ControllerConfig,
        memory: ControllerMemory,
    },
}

fn open_loop_source(
    cfg: &ExperimentConfig,
    excitation: &Excitation,
    label: &str,
    trial: usize,
    meals: Option<&Meals>,
    n: usize,
) -> Result<Source<'static>, ExperimentError> {
    let ts = cfg.sample_period;
    Ok(match excitation {
        Excitation::Signal {
            signal: kind @ SignalKind::MultisineWithGuard(_),
        } => Source::Guarded(signal(cfg, label, trial, kind).multisine()?),
        Excitation::Signal { signal: kind } => {
            let series = signal(cfg, label, trial, kind).generate(n as f64 * ts, ts)?;
            Source::Samples(series.values)
        }
        Excitation::Insulin { schedule } => {
            let mut rng = stream_rng(cfg.seed, label, &[trial as u64]);
            let rates = insulin_rates(schedule, meals, n, ts, &mut rng);
            Source::Samples(rates.into_iter().map(|r| vec![r]).collect())
        }
    })
}

/// Samples `kind` at the measurement instants `(k + 1) Ts`.
fn sampled(cfg: &ExperimentConfig, label: &str, trial: usize, kind: &SignalKind, n: usize) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let ts = cfg.sample_period;
    let series = signal(cfg, label, trial, kind).generate((n + 1) as f64 * ts, ts)?;
    Ok(series.values[1..=n].to_vec())
}

struct SimSpec<'a> {
    n: usize,
    reference: Vec<Vec<f64>>,
    disturbance: Vec<Vec<f64>>,
    meals: Option<&'a Meals>,
    noise: Noise,
    initial_input: Vec<f64>,
    /// `(midpoint, range)` of the design-run outputs.
    guard: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Default)]
struct SimOutput {
    inputs: Vec<Vec<f64>>,
    clean: Vec<Vec<f64>>,
    measured: Vec<Vec<f64>>,
    exogenous: Vec<f64>,
    sweeps: Vec<usize>,
    solve_seconds: Vec<f64>,
    in_box: bool,
    flag: Option<String>,
}

fn simulate(cfg: &ExperimentConfig, plant: &mut OdePlant, source: &mut Source, sim: SimSpec) -> Result<SimOutput, ExperimentError> {
    let SimSpec {
        n,
        reference,
        disturbance,
        meals,
        mut noise,
        initial_input,
        guard,
    } = sim;
    let ts = cfg.sample_period;
    let (u_scale, y_scale) = (&cfg.scaling.input, &cfg.scaling.output);
    let n_y = cfg.plant.output_dim();
    let w = |t: f64| meals.map_or(0.0, |m| m.at(t));

    // Controller history in model units, pre-filled with the initial condition.
    let order = match source {
        Source::Controller { order, .. } => *order,
        _ => 0,
    };
    let y0 = plant.output();
    let mut hist_u: Vec<Vec<f64>> = vec![initial_input.iter().zip(u_scale).map(|(u, s)| u / s).collect(); order];
    let mut hist_y: Vec<Vec<f64>> = vec![y0.iter().zip(y_scale).map(|(y, s)| y / s).collect(); order];

    let mut out = SimOutput {
        in_box: true,
        ..SimOutput::default()
    };
    for k in 0..n {
        let t = plant.time();
        let u: Vec<f64> = match source {
            Source::Samples(values) => values[k].clone(),
            Source::Guarded(m) => {
                let z = &plant.state()[..m.channels.len()];
                m.command(t, z)
            }
            Source::Zero => vec![0.0; cfg.plant.input_dim()],
            Source::Controller {
                model,
                horizon,
                config,
                memory,
                ..
            } => {
                let q = regressor_at(&hist_u, &hist_y, order + k, order);
                let mut r_plus = Vec::with_capacity(*horizon * n_y);
                for s in 0..*horizon {
                    let r = &reference[(k + s).min(n - 1)];
                    r_plus.extend(r.iter().zip(y_scale).map(|(r, sc)| r / sc));
                }
                let started = Instant::now();
                let step = control_step(*model, &r_plus, &q, config, memory);
                out.solve_seconds.push(started.elapsed().as_secs_f64());
                let (command, result) = match step {
                    Ok(v) => v,
                    Err(e) => {
                        out.flag = Some(format!("controller failed at sample {k}: {e}"));
                        break;
                    }
                };
                out.sweeps.push(result.sweeps_used);
                for (i, c) in command.iter().enumerate() {
                    let b = &config.bounds[i.min(config.bounds.len() - 1)];
                    out.in_box &= b.contains(*c);
                }
                hist_u.push(command.clone());
                command.iter().zip(u_scale).map(|(c, s)| c * s).collect()
            }
        };
        match plant.step(&u, &w, ts) {
            Ok(()) => {}
            Err(PlantError::Diverged { time, .. }) => {
                out.flag = Some(format!("plant diverged at t = {time}"));
                break;
            }
            Err(e) => return Err(e.into()),
        }
        let clean = plant.output();
        let d = &disturbance[k];
        let e = noise.sample(n_y);
        let measured: Vec<f64> = (0..n_y).map(|j| clean[j] + d[j] + e[j]).collect();
        if order > 0 {
            hist_y.push(measured.iter().zip(y_scale).map(|(y, s)| y / s).collect());
        }
        out.inputs.push(u);
        out.exogenous.push(w(t));
        out.measured.push(measured);
        let escaped = guard.as_ref().is_some_and(|(mid, range)| {
            (0..n_y).any(|j| ((clean[j] + d[j]) - mid[j]).abs() > cfg.divergence_factor * range[j].max(f64::EPSILON))
        });
        out.clean.push(clean);
        if escaped {
            out.flag = Some(format!("output left the design range at sample {k}"));
            break;
        }
    }
    Ok(out)
}

fn column_stats(rows: &[Vec<f64>], j: usize) -> (f64, f64, f64, f64) {
    let n = rows.len().max(1) as f64;
    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
    let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), lo, hi)
}

/// Generates the identification record of `trial`.
pub fn design_run(cfg: &ExperimentConfig, trial: usize) -> Result<DesignRun, ExperimentError> {
    let n = cfg.data.length;
    let (n_u, n_y) = (cfg.plant.input_dim(), cfg.plant.output_dim());
    let meal_spec = cfg.data.meals.as_ref().map(|k| signal(cfg, &data_label("meals"), trial, k));
    let meals = Meals::realize(meal_spec)?;
    let mut source = open_loop_source(cfg, &cfg.data.excitation, &data_label("excitation"), trial, meals.as_ref(), n)?;
    let mut plant = OdePlant::at_rest(cfg.plant.clone()).with_substeps(cfg.substeps);
    let sim = simulate(
        cfg,
        &mut plant,
        &mut source,
        SimSpec {
            n,
            reference: vec![vec![0.0; n_y]; n],
            disturbance: vec![vec![0.0; n_y]; n],
            meals: meals.as_ref(),
            noise: Noise {
                rng: stream_rng(cfg.seed, &data_label("silent"), &[]),
                spec: NoiseSpec::None,
                scale: vec![],
            },
            initial_input: vec![0.0; n_u],
            guard: None,
        },
    )?;
    let stats: Vec<_> = (0..n_y).map(|j| column_stats(&sim.clean, j)).collect();
    let output_std: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let mut noise = Noise {
        rng: stream_rng(cfg.seed, &data_label("noise"), &[trial as u64]),
        spec: cfg.data.noise.clone(),
        scale: output_std.clone(),
    };
    let outputs: Vec<Vec<f64>> = sim
        .clean
        .iter()
        .map(|y| {
            let e = noise.sample(n_y);
            (0..n_y).map(|j| (y[j] + e[j]) / cfg.scaling.output[j]).collect()
        })
        .collect();
    let inputs: Vec<Vec<f64>> = sim
        .inputs
        .iter()
        .map(|u| u.iter().zip(&cfg.scaling.input).map(|(u, s)| u / s).collect())
        .collect();
    let input_max = (0..n_u).map(|j| column_stats(&inputs, j).3).collect();
    Ok(DesignRun {
        data: SystemData::new(inputs, outputs, cfg.sample_period)?,
        output_mid: stats.iter().map(|s| 0.5 * (s.2 + s.3)).collect(),
        output_range: stats.iter().map(|s| s.3 - s.2).collect(),
        output_std,
        clean: sim.clean,
        input_max,
        flag: sim.flag,
    })
}

/// Runs the plant from rest under a constant input so a scenario can start
/// from the matching equilibrium.
fn settled_plant(cfg: &ExperimentConfig, input: &[f64], duration: f64) -> Result<OdePlant, ExperimentError> {
    let mut plant = OdePlant::at_rest(cfg.plant.clone()).with_substeps(cfg.substeps);
    let steps = (duration / cfg.sample_period).round() as usize;
    for _ in 0..steps {
        plant.step(input, &|_| 0.0, cfg.sample_period)?;
    }
    Ok(OdePlant::new(cfg.plant.clone(), plant.state().to_vec())?.with_substeps(cfg.substeps))
}

fn controller_for(setup_cfg: &ControllerConfig, factor: Option<f64>, input_max: &[f64]) -> ControllerConfig {
    let mut c = setup_cfg.clone();
    if let Some(f) = factor {
        let n_u = input_max.len();
        for (i, b) in c.bounds.iter_mut().enumerate() {
            let hi = f * input_max[i % n_u];
            if hi > b.lo() {
                *b = crate::poly::Interval::new(b.lo(), hi).expect("ordered bounds");
            }
        }
    }
    c
}

/// A fitted model with its controller. `shared` caches the collapsed model
/// used in `simo_const` mode.
struct Setup {
    name: String,
    model: PredictionModel,
    config: ControllerConfig,
    shared: Option<SharedCommandModel>,
}

struct ScenarioRun {
    result: ScenarioResult,
    trajectory: Trajectory,
    solve_seconds: Vec<f64>,
}

fn run_scenario(
    cfg: &ExperimentConfig,
    trial: usize,
    sc: &Scenario,
    design: &DesignRun,
    models: &[Setup],
) -> Result<ScenarioRun, ExperimentError> {
    let n = sc.samples;
    let (n_u, n_y) = (cfg.plant.input_dim(), cfg.plant.output_dim());
    let label = |what: &str| test_label(sc, what);
    let reference = match &sc.reference {
        ReferenceSpec::Constant { values } => vec![values.clone(); n],
        ReferenceSpec::Signal { signal: kind } => sampled(cfg, &label("reference"), trial, kind, n)?,
    };
    let disturbance = match &sc.output_disturbance {
        Some(kind) => sampled(cfg, &label("disturbance"), trial, kind, n)?,
        None => vec![vec![0.0; n_y]; n],
    };
    let meal_spec = sc.meals.as_ref().map(|k| signal(cfg, &label("meals"), trial, k));
    let meals = Meals::realize(meal_spec)?;
    let initial_input = sc.initial_input.clone().unwrap_or_else(|| vec![0.0; n_u]);
    let mut plant = if sc.settle_time > 0.0 {
        settled_plant(cfg, &initial_input, sc.settle_time)?
    } else {
        OdePlant::at_rest(cfg.plant.clone()).with_substeps(cfg.substeps)
    };
    let mut source = match &sc.policy {
        Policy::Zero => Source::Zero,
        Policy::Excitation { excitation } => open_loop_source(cfg, excitation, &label("input"), trial, meals.as_ref(), n)?,
        Policy::Controller { setup } => {
            let s = models.iter().find(|s| &s.name == setup).expect("validated setup name");
            let spec = s.model.spec();
            Source::Controller {
                model: match &s.shared {
                    Some(shared) => shared,
                    None => &s.model,
                },
                order: spec.order,
                horizon: spec.horizon,
                config: s.config.clone(),
                memory: ControllerMemory::new(),
            }
        }
    };
    let noise = Noise {
        rng: stream_rng(cfg.seed, &label("noise"), &[trial as u64]),
        spec: sc.noise.clone(),
        scale: design.output_std.clone(),
    };
    let sim = simulate(
        cfg,
        &mut plant,
        &mut source,
        SimSpec {
            n,
            reference: reference.clone(),
            disturbance: disturbance.clone(),
            meals: meals.as_ref(),
            noise,
            initial_input,
            guard: Some((design.output_mid.clone(), design.output_range.clone())),
        },
    )?;

    let ran = sim.clean.len();
    let out: Vec<Vec<f64>> = (0..ran).map(|k| (0..n_y).map(|j| sim.clean[k][j] + disturbance[k][j]).collect()).collect();
    let err = |j: usize, from: usize| -> Vec<f64> { (from..ran).map(|k| reference[k][j] - out[k][j]).collect() };
    let from = sc.transient.min(ran);
    let result = ScenarioResult {
        name: sc.name.clone(),
        samples_run: ran,
        flag: sim.flag,
        rms: (0..n_y).map(|j| rms(&err(j, 0))).collect(),
        post_rms: (0..n_y).map(|j| rms(&err(j, from))).collect(),
        post_max_error: (0..n_y)
            .map(|j| err(j, from).iter().fold(0.0, |m: f64, e| m.max(e.abs())))
            .collect(),
        band_fraction: sc.band.map(|(lo, hi)| {
            let inside = out[from..].iter().filter(|y| y.iter().all(|v| *v >= lo && *v <= hi)).count();
            inside as f64 / (ran - from).max(1) as f64
        }),
        min_output: (0..n_y).map(|j| out.iter().map(|y| y[j]).fold(f64::INFINITY, f64::min)).collect(),
        max_output: (0..n_y).map(|j| out.iter().map(|y| y[j]).fold(f64::NEG_INFINITY, f64::max)).collect(),
        mean_sweeps: if sim.sweeps.is_empty() {
            0.0
        } else {
            sim.sweeps.iter().sum::<usize>() as f64 / sim.sweeps.len() as f64
        },
        commands_in_box: sim.in_box,
    };
    let ts = cfg.sample_period;
    let trajectory = Trajectory {
        scenario: sc.name.clone(),
        time: (0..ran).map(|k| (k + 1) as f64 * ts).collect(),
        reference: reference[..ran].to_vec(),
        inputs: sim.inputs,
        exogenous: sim.exogenous,
        disturbance: disturbance[..ran].to_vec(),
        clean: sim.clean,
        measured: sim.measured,
    };
    Ok(ScenarioRun {
        result,
        trajectory,
        solve_seconds: sim.solve_seconds,
    })
}

/// Design run, identification and every scenario of one trial. Returns the
/// report, the trajectories and the per-step solve times.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<(TrialReport, Vec<Trajectory>, Vec<f64>), ExperimentError> {
    let design = design_run(cfg, trial)?;
    let mut report = TrialReport {
        trial,
        flag: design.flag.clone().map(|f| format!("design run: {f}")),
        fits: vec![],
        scenarios: vec![],
    };
    if report.flag.is_some() {
        return Ok((report, vec![], vec![]));
    }
    let mut models = Vec::new();
    for setup in &cfg.controllers {
        match fit(&design.data, &setup.model) {
            Ok(model) => {
                let fr = model.fit_report().expect("fitted models carry a report");
                report.fits.push(FitSummary {
                    setup: setup.name.clone(),
                    rows: fr.rows,
                    basis_size: fr.basis_size,
                    residual_rms: fr.residual_rms.clone(),
                });
                let config = controller_for(&setup.controller, setup.upper_bound_from_data, &design.input_max);
                let shared = if config.mode == SolverMode::SimoConst {
                    Some(SharedCommandModel::new(&model)?)
                } else {
                    None
                };
                models.push(Setup {
                    name: setup.name.clone(),
                    model,
                    config,
                    shared,
                });
            }
            Err(e) => {
                report.flag = Some(format!("fit {}: {e}", setup.name));
                return Ok((report, vec![], vec![]));
            }
        }
    }
    let mut trajectories = Vec::new();
    let mut solve = Vec::new();
    for sc in &cfg.scenarios {
        let run = run_scenario(cfg, trial, sc, &design, &models)?;
        report.scenarios.push(run.result);
        trajectories.push(run.trajectory);
        solve.extend(run.solve_seconds);
    }
    Ok((report, trajectories, solve))
}

/// Monte Carlo over independent trials, in parallel.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport, ExperimentError> {
    let mut cfg = config.clone();
    if let Some(t) = opts.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let started = Instant::now();
    let work = || -> Result<Vec<_>, ExperimentError> {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let t0 = Instant::now();
                run_trial(&cfg, trial).map(|r| (r, t0.elapsed().as_secs_f64()))
            })
            .collect()
    };
    let runs = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let mut timing = Timing::default();
    let mut all_solve = Vec::new();
    let mut trials = Vec::new();
    let mut kept = Vec::new();
    for ((report, trajectories, solve), secs) in runs {
        if report.trial == 0 && opts.keep_trajectories {
            kept = trajectories;
        }
        trials.push(report);
        timing.trial_seconds.push(secs);
        all_solve.extend(solve);
    }
    if !all_solve.is_empty() {
        timing.mean_solve_seconds = all_solve.iter().sum::<f64>() / all_solve.len() as f64;
        timing.max_solve_seconds = all_solve.iter().copied().fold(0.0, f64::max);
    }
    timing.total_seconds = started.elapsed().as_secs_f64();
    Ok(ExperimentReport::assemble(cfg, trials, timing, kept))
}
