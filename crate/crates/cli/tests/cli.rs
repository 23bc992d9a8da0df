use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use polyinv_core::experiments::{Check, ExperimentConfig};
use polyinv_core::repro::bytes_hash;
use polyinv_core::{BenchmarkConfig, ModelSpec, PredictionModel, SparsePolynomial};
use serde_json::Value;

fn polyinv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyinv"))
        .args(args)
        .env_remove("POLYINV_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn short_duffing() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::duffing();
    cfg.data.length = 1500;
    for sc in &mut cfg.scenarios {
        sc.samples = 200;
        sc.transient = sc.transient.min(100);
    }
    cfg.trials = 1;
    cfg
}

#[test]
fn open_loop_simulation_feeds_identification() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let o = polyinv(&["simulate", "duffing", "--open-loop", "--out", sim.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = sim.join("open_loop.csv");
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "t,u1,y1");
    let manifest = json(&sim.join("manifest.json"));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["files"]["open_loop.csv"], bytes_hash(&fs::read(&csv).unwrap()));

    let csv_before = bytes_hash(&fs::read(&csv).unwrap());
    let model = tmp.path().join("model.json");
    let args = [
        "identify", "--data", csv.to_str().unwrap(), "--order", "2", "--horizon", "8", "--degree", "3", "--out",
        model.to_str().unwrap(),
    ];
    let o = polyinv(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("component 7: residual RMS"));
    let fitted = PredictionModel::load(&model).unwrap();
    assert_eq!(fitted.components().len(), 8);
    let report = json(&tmp.path().join("model.fit.json"));
    assert_eq!(report["data_file_hash"], csv_before.as_str());
    assert!(report["spec_hash"].is_string());

    let first = fs::read(&model).unwrap();
    assert!(polyinv(&args).status.success());
    assert_eq!(fs::read(&model).unwrap(), first);
    assert_eq!(bytes_hash(&fs::read(&csv).unwrap()), csv_before);
}

#[test]
fn identify_reports_bad_rows_and_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("data.csv");
    fs::write(&csv, "t,u1,y1\n0,0.1,0.2\n0.1,0.3\n0.2,0.1,0.0\n").unwrap();
    let out = tmp.path().join("m.json");
    let o = polyinv(&[
        "identify", "--data", csv.to_str().unwrap(), "--order", "1", "--horizon", "1", "--degree", "1", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    fs::write(&csv, "t,u1,y1\n0,0.1,0.2\n0.1,0.3,0.1\n0.2,0.1,0.0\n0.3,0.2,0.4\n").unwrap();
    let spec = tmp.path().join("spec.json");
    fs::write(&spec, serde_json::to_string(&ModelSpec::new(1, 1, 1, 2, 1)).unwrap()).unwrap();
    let o = polyinv(&["identify", "--data", csv.to_str().unwrap(), "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("input columns"), "{}", stderr(&o));
}

/// `y_t = u_t` over a one-step horizon with one lag.
fn identity_model(dir: &Path) -> String {
    let spec = ModelSpec::new(1, 1, 1, 1, 1);
    let f = SparsePolynomial::variable(spec.n_vars(), 0);
    let model = PredictionModel::from_parts(spec, vec![f]).unwrap();
    let path = dir.join("identity.json");
    model.save(&path).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn invert_reaches_reachable_references() {
    let tmp = tempfile::tempdir().unwrap();
    let model = identity_model(tmp.path());
    let args = ["invert", "--model", &model, "--reference", "0.4", "--regressor", "0.1,-0.2"];
    let o = polyinv(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["objective"].as_f64().unwrap() < 1e-20);
    assert!((v["u_star"][0].as_f64().unwrap() - 0.4).abs() < 1e-12);
    assert!(v["sweeps"].as_u64().is_some());
    assert_eq!(stdout(&polyinv(&args)), stdout(&o));

    let o = polyinv(&["invert", "--model", &model, "--reference", "5", "--regressor", "0,0", "--bound", "1"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["objective"].as_f64().unwrap() - 16.0).abs() < 1e-12);
    assert_eq!(v["u_star"][0], 1.0);

    let o = polyinv(&["invert", "--model", &model, "--reference", "0.4", "--regressor", "0.1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("regressor"), "{}", stderr(&o));
}

#[test]
fn benchmark_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = BenchmarkConfig {
        dims: vec![1, 2],
        degrees: vec![1, 2],
        main_trials: 1,
        sub_trials: 2,
        ..BenchmarkConfig::desk()
    };
    let cfg_path = tmp.path().join("bench.json");
    fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = tmp.path().join("bench");
    let o = polyinv(&["benchmark", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("benchmark.csv")).unwrap();
    assert!(csv.starts_with("m,d_p,n_s,E2,E_inf"));
    assert_eq!(csv.lines().count(), 5);

    let o = polyinv(&["benchmark", "--config", cfg_path.to_str().unwrap(), "--max-e-inf", "-1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn desk_benchmark_covers_the_reference_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("desk");
    let o = polyinv(&["benchmark", "--scale", "desk", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(out.join("benchmark.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn experiment_reports_and_exit_status_follow_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = short_duffing();
    cfg.checks = vec![Check::MeanRms {
        scenario: "regulation".into(),
        max: vec![1.0],
    }];
    let passing = tmp.path().join("pass.json");
    fs::write(&passing, cfg.to_json()).unwrap();
    let before = bytes_hash(&fs::read(&passing).unwrap());
    let out = tmp.path().join("run");
    let o = polyinv(&["experiment", "duffing", "--config", passing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&out.join("report.json"));
    assert!(report["summary"][0]["mean_rms"][0].is_number());
    assert_eq!(report["checks"][0]["passed"], true);
    for sc in ["tracking", "disturbance", "regulation"] {
        let header = fs::read_to_string(out.join(format!("{sc}.csv"))).unwrap().lines().next().unwrap().to_string();
        assert!(header.starts_with("t,r0,u0,w,d0,y_clean0,y_meas0"), "{header}");
    }
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["config_hash"], report["config_hash"]);
    assert_eq!(manifest["seed"], 1);
    assert_eq!(bytes_hash(&fs::read(&passing).unwrap()), before);

    // Same inputs, same bytes: the report itself carries timings, the
    // trajectories and trial table do not.
    let again = tmp.path().join("again");
    assert!(polyinv(&["experiment", "duffing", "--config", passing.to_str().unwrap(), "--out", again.to_str().unwrap()])
        .status
        .success());
    for f in ["trials.csv", "tracking.csv", "regulation.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    assert_eq!(json(&again.join("report.json"))["result_hash"], report["result_hash"]);

    cfg.checks.push(Check::MeanRms {
        scenario: "tracking".into(),
        max: vec![0.0],
    });
    let failing = tmp.path().join("fail.json");
    fs::write(&failing, cfg.to_json()).unwrap();
    let o = polyinv(&["experiment", "duffing", "--config", failing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL tracking"));
}

#[test]
fn seed_comes_from_flag_or_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, short_duffing().to_json()).unwrap();
    let out = tmp.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_polyinv"))
        .args(["simulate", "duffing", "--open-loop", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("POLYINV_SEED", "77")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&out.join("manifest.json"))["seed"], 77);

    let flag = tmp.path().join("flag");
    let o = polyinv(&[
        "--seed", "77", "simulate", "duffing", "--open-loop", "--config", cfg.to_str().unwrap(), "--out",
        flag.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("open_loop.csv")).unwrap(), fs::read(flag.join("open_loop.csv")).unwrap());

    let plain = tmp.path().join("plain");
    assert!(polyinv(&["simulate", "duffing", "--open-loop", "--config", cfg.to_str().unwrap(), "--out", plain.to_str().unwrap()])
        .status
        .success());
    assert_ne!(fs::read(out.join("open_loop.csv")).unwrap(), fs::read(plain.join("open_loop.csv")).unwrap());
}

#[test]
fn closed_loop_simulation_writes_scenario_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, short_duffing().to_json()).unwrap();
    let out = tmp.path().join("sim");
    let o = polyinv(&["simulate", "duffing", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["tracking.csv", "disturbance.csv", "regulation.csv", "trial.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = polyinv(&["simulate", "pendulum", "--open-loop", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown experiment"));
}
