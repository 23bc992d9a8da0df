//! `polyinv`: identification, model inversion, simulation, benchmark and
//! closed-loop experiment pipelines.

mod artifacts;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use polyinv_core::benchmark::run_benchmark;
use polyinv_core::controller::invert;
use polyinv_core::experiments::{design_run, run_experiment, run_trial, RunOptions};
use polyinv_core::repro::{bytes_hash, content_hash};
use polyinv_core::{
    BenchmarkConfig, ControllerConfig, ExperimentConfig, Interval, ModelSpec, PredictionModel, SolverMode, SystemData,
};
use serde::Serialize;

use artifacts::{parse_list, ArtifactDir};

/// Exit status when a run completed but violated one of its thresholds.
const THRESHOLD_EXIT: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "polyinv", version, about = "Polynomial model identification and inversion-based control")]
struct Cli {
    /// Overrides the seed of the benchmark or experiment config.
    #[arg(long, global = true, env = "POLYINV_SEED")]
    seed: Option<u64>,
    /// Worker threads for the Monte Carlo loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a multi-step predictor to a `t,u1..,y1..` CSV record.
    Identify(IdentifyArgs),
    /// Minimize the tracking cost of a model for one reference and regressor.
    Invert(InvertArgs),
    /// Simulate an experiment plant open loop or run one closed-loop trial.
    Simulate(SimulateArgs),
    /// Random-polynomial optimality-gap benchmark.
    Benchmark(BenchmarkArgs),
    /// Monte Carlo closed-loop experiment.
    Experiment(ExperimentArgs),
}

#[derive(Debug, clap::Args)]
struct IdentifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model spec JSON. Without it the structure comes from the flags below
    /// and the dimensions from the data.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, conflicts_with = "spec")]
    order: Option<usize>,
    #[arg(long, conflicts_with = "spec")]
    horizon: Option<usize>,
    #[arg(long, conflicts_with = "spec")]
    degree: Option<u32>,
    #[arg(long, conflicts_with = "spec")]
    ridge: Option<f64>,
    /// Model file to write; the fit report goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    General,
    Affine,
    SimoConst,
}

impl From<Mode> for SolverMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::General => SolverMode::General,
            Mode::Affine => SolverMode::Affine,
            Mode::SimoConst => SolverMode::SimoConst,
        }
    }
}

#[derive(Debug, clap::Args)]
struct InvertArgs {
    #[arg(long)]
    model: PathBuf,
    /// Stacked future reference, comma separated, model units.
    #[arg(long, allow_hyphen_values = true)]
    reference: String,
    /// Past inputs then past outputs, newest first, comma separated.
    #[arg(long, allow_hyphen_values = true, default_value = "")]
    regressor: String,
    /// Controller config JSON; overrides the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "general")]
    mode: Mode,
    /// Symmetric box half-width for every decision coordinate.
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    /// Also write the result JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    /// Built-in experiment whose plant and signals are used.
    name: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only the identification run: excitation in, measured output out.
    #[arg(long)]
    open_loop: bool,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Paper,
}

#[derive(Debug, clap::Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    /// Benchmark config JSON; replaces `--scale`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Largest acceptable worst-case optimality gap in any cell.
    #[arg(long, default_value_t = 0.05)]
    max_e_inf: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct ExperimentArgs {
    /// `duffing`, `robot` or `diabetes`.
    name: String,
    /// Experiment config JSON; defaults to the built-in one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Skip the trial-0 trajectory files.
    #[arg(long)]
    no_trajectories: bool,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_experiment(name: &str, path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::builtin(name).ok_or_else(|| anyhow!("unknown experiment `{name}`"))?,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct FitArtifact<'a> {
    schema: &'static str,
    data_file_hash: String,
    spec_hash: String,
    seed: Option<u64>,
    spec: &'a ModelSpec,
    report: &'a polyinv_core::sysid::FitReport,
}

fn identify(args: &IdentifyArgs, seed: Option<u64>) -> Result<u8> {
    let bytes = fs::read(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let data = SystemData::read_csv(bytes.as_slice()).with_context(|| format!("parsing {}", args.data.display()))?;
    let spec = match &args.spec {
        Some(p) => read_json::<ModelSpec>(p)?,
        None => {
            let (Some(order), Some(horizon), Some(degree)) = (args.order, args.horizon, args.degree) else {
                bail!("give --spec or all of --order, --horizon and --degree");
            };
            let mut s = ModelSpec::new(order, horizon, degree, data.input_dim(), data.output_dim());
            s.ridge = args.ridge;
            s
        }
    };
    let model = polyinv_core::sysid::fit(&data, &spec)?;
    let report = model.fit_report().expect("fitted model has a report");
    fs::write(&args.out, model.to_json()).with_context(|| format!("writing {}", args.out.display()))?;
    let artifact = FitArtifact {
        schema: "polyinv-fit-report/1",
        data_file_hash: bytes_hash(&bytes),
        spec_hash: content_hash(&spec),
        seed,
        spec: &spec,
        report,
    };
    let report_path = args.out.with_extension("fit.json");
    fs::write(&report_path, serde_json::to_string_pretty(&artifact)? + "\n")?;
    println!(
        "fitted {} components on {} rows, {} basis functions",
        model.components().len(),
        report.rows,
        report.basis_size
    );
    for (j, r) in report.residual_rms.iter().enumerate() {
        println!("  component {j}: residual RMS {r:.6e}");
    }
    println!("wrote {} and {}", args.out.display(), report_path.display());
    Ok(0)
}

#[derive(Serialize)]
struct InvertArtifact {
    schema: &'static str,
    model_hash: String,
    config_hash: String,
    seed: u64,
    u_star: Vec<f64>,
    applied_command: Vec<f64>,
    objective: f64,
    sweeps: usize,
    starts: usize,
}

fn invert_cmd(args: &InvertArgs, seed: Option<u64>) -> Result<u8> {
    let model = PredictionModel::load(&args.model)?;
    let reference = parse_list(&args.reference).map_err(|e| anyhow!("--reference: {e}"))?;
    let regressor = parse_list(&args.regressor).map_err(|e| anyhow!("--regressor: {e}"))?;
    let mut config = match &args.config {
        Some(p) => read_json::<ControllerConfig>(p)?,
        None => {
            let mode = SolverMode::from(args.mode);
            let n = if mode == SolverMode::SimoConst { 1 } else { model.spec().n_decision() };
            if args.bound.is_nan() || args.bound <= 0.0 {
                bail!("--bound must be positive");
            }
            ControllerConfig::uniform(mode, Interval::symmetric(args.bound), n).with_mu(args.mu)
        }
    };
    if let Some(s) = seed {
        config.restart_seed = s;
    }
    let res = invert(&model, &reference, &regressor, &config, None)?;
    if !res.objective.is_finite() {
        bail!("objective is not finite: {}", res.objective);
    }
    let artifact = InvertArtifact {
        schema: "polyinv-inversion/1",
        model_hash: content_hash(&model),
        config_hash: content_hash(&config),
        seed: config.restart_seed,
        u_star: res.u_star,
        applied_command: res.applied_command,
        objective: res.objective,
        sweeps: res.sweeps_used,
        starts: res.starts,
    };
    let text = serde_json::to_string_pretty(&artifact)?;
    if let Some(out) = &args.out {
        fs::write(out, text.clone() + "\n").with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{text}");
    Ok(0)
}

fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<u8> {
    let cfg = load_experiment(&args.name, args.config.as_deref(), seed)?;
    let mut dir = ArtifactDir::create(&args.out, "simulate", content_hash(&cfg), Some(cfg.seed))?;
    if args.open_loop {
        let run = design_run(&cfg, args.trial)?;
        let scale = |rows: &[Vec<f64>], s: &[f64]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().zip(s).map(|(v, k)| v * k).collect()).collect()
        };
        let physical = SystemData::new(
            scale(run.data.inputs(), &cfg.scaling.input),
            scale(run.data.outputs(), &cfg.scaling.output),
            cfg.sample_period,
        )?;
        let mut buf = Vec::new();
        physical.write_csv(&mut buf)?;
        let path = dir.write("open_loop.csv", &buf)?;
        if let Some(f) = run.flag {
            eprintln!("warning: design run stopped early: {f}");
        }
        println!("wrote {} samples to {}", physical.len(), path.display());
    } else {
        let (report, trajectories, _) = run_trial(&cfg, args.trial)?;
        if let Some(f) = &report.flag {
            eprintln!("warning: {f}");
        }
        for tr in &trajectories {
            let mut buf = Vec::new();
            tr.write_csv(&mut buf)?;
            dir.write(&format!("{}.csv", tr.scenario), &buf)?;
        }
        dir.write("trial.json", serde_json::to_string_pretty(&report)?.as_bytes())?;
        for sc in &report.scenarios {
            println!("{}: RMS {:.4?}{}", sc.name, sc.rms, sc.flag.as_deref().map(|f| format!(" ({f})")).unwrap_or_default());
        }
    }
    dir.finish()?;
    Ok(0)
}

fn benchmark(args: &BenchmarkArgs, seed: Option<u64>, verbose: u8) -> Result<u8> {
    let mut cfg = match (&args.config, args.scale) {
        (Some(p), _) => read_json::<BenchmarkConfig>(p)?,
        (None, Scale::Desk) => BenchmarkConfig::desk(),
        (None, Scale::Paper) => BenchmarkConfig::paper(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_benchmark(&cfg)?;
    let mut dir = ArtifactDir::create(&args.out, "benchmark", report.config_hash.clone(), Some(cfg.seed))?;
    dir.write("benchmark.csv", report.to_csv()?.as_bytes())?;
    dir.write("benchmark.json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    dir.finish()?;
    let mut violations = 0;
    for c in &report.cells {
        let bad = c.flagged || c.e_inf > args.max_e_inf;
        violations += usize::from(bad);
        if bad || verbose > 0 {
            println!(
                "{} m={} d_p={} n_s={} E2={:.3e} E_inf={:.3e}",
                if bad { "FAIL" } else { "ok" },
                c.m,
                c.d_p,
                c.n_s,
                c.e2,
                c.e_inf
            );
        }
    }
    println!("{} cells, {violations} over threshold, {:.1} s", report.cells.len(), report.total_seconds);
    Ok(if violations == 0 { 0 } else { THRESHOLD_EXIT })
}

fn experiment(args: &ExperimentArgs, seed: Option<u64>, threads: Option<usize>) -> Result<u8> {
    let cfg = load_experiment(&args.name, args.config.as_deref(), seed)?;
    let opts = RunOptions {
        trials: args.trials,
        threads,
        keep_trajectories: !args.no_trajectories,
    };
    let report = run_experiment(&cfg, &opts)?;
    let mut dir = ArtifactDir::create(&args.out, "experiment", report.config_hash.clone(), Some(report.config.seed))?;
    dir.write("report.json", report.to_json().as_bytes())?;
    dir.write("trials.csv", report.to_csv()?.as_bytes())?;
    for tr in &report.trajectories {
        let mut buf = Vec::new();
        tr.write_csv(&mut buf)?;
        dir.write(&format!("{}.csv", tr.scenario), &buf)?;
    }
    dir.finish()?;
    for s in &report.summary {
        println!(
            "{}: mean RMS {:.4?} over {} trials ({} flagged)",
            s.scenario, s.mean_rms, s.completed, s.flagged
        );
    }
    for c in &report.checks {
        println!("{c}");
    }
    println!("result hash {}", report.result_hash);
    Ok(if report.passed() { 0 } else { THRESHOLD_EXIT })
}

fn run(cli: &Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Identify(a) => identify(a, cli.seed),
        Command::Invert(a) => invert_cmd(a, cli.seed),
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Benchmark(a) => benchmark(a, cli.seed, cli.verbose),
        Command::Experiment(a) => experiment(a, cli.seed, cli.threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
