use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CheckOutcome, ExperimentConfig, ExperimentError};
use crate::repro::content_hash;

pub const REPORT_SCHEMA: &str = "polyinv-experiment-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub setup: String,
    pub rows: usize,
    pub basis_size: usize,
    /// Training residual RMS per component, model units.
    pub residual_rms: Vec<f64>,
}

/// Metrics of one scenario run. Outputs are the plant outputs plus any
/// output disturbance, without measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub samples_run: usize,
    /// Why the run stopped early, if it did.
    pub flag: Option<String>,
    pub rms: Vec<f64>,
    pub post_rms: Vec<f64>,
    pub post_max_error: Vec<f64>,
    pub band_fraction: Option<f64>,
    pub min_output: Vec<f64>,
    pub max_output: Vec<f64>,
    pub mean_sweeps: f64,
    pub commands_in_box: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    /// Set when the design run or a fit failed; no scenarios ran then.
    pub flag: Option<String>,
    pub fits: Vec<FitSummary>,
    pub scenarios: Vec<ScenarioResult>,
}

/// Averages over the trials that completed a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub completed: usize,
    pub flagged: usize,
    pub mean_rms: Vec<f64>,
    pub worst_post_max_error: Vec<f64>,
    pub min_band_fraction: Option<f64>,
    pub max_output: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub trial_seconds: Vec<f64>,
    pub mean_solve_seconds: f64,
    pub max_solve_seconds: f64,
}

/// Time series of one scenario, physical units. `time[k]` is the instant
/// at which `outputs[k]` is measured; `inputs[k]` was held just before it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario: String,
    pub time: Vec<f64>,
    pub reference: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub exogenous: Vec<f64>,
    pub disturbance: Vec<Vec<f64>>,
    pub clean: Vec<Vec<f64>>,
    pub measured: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let width = |rows: &[Vec<f64>]| rows.first().map_or(0, Vec::len);
        let (n_r, n_u, n_d) = (width(&self.reference), width(&self.inputs), width(&self.disturbance));
        let n_y = width(&self.clean);
        let mut header = vec!["t".to_string()];
        header.extend((0..n_r).map(|j| format!("r{j}")));
        header.extend((0..n_u).map(|j| format!("u{j}")));
        header.push("w".into());
        header.extend((0..n_d).map(|j| format!("d{j}")));
        header.extend((0..n_y).map(|j| format!("y_clean{j}")));
        header.extend((0..n_y).map(|j| format!("y_meas{j}")));
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.time[k]];
            row.extend(&self.reference[k]);
            row.extend(&self.inputs[k]);
            row.push(self.exogenous[k]);
            row.extend(&self.disturbance[k]);
            row.extend(&self.clean[k]);
            row.extend(&self.measured[k]);
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub name: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    /// Hash of trials and summaries; timings are left out.
    pub result_hash: String,
    pub trials: Vec<TrialReport>,
    pub summary: Vec<ScenarioSummary>,
    pub checks: Vec<CheckOutcome>,
    pub timing: Timing,
    /// Trajectories of the first trial, when requested.
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

impl ExperimentReport {
    pub fn assemble(config: ExperimentConfig, trials: Vec<TrialReport>, timing: Timing, trajectories: Vec<Trajectory>) -> Self {
        let summary = summarize(&config, &trials);
        let result_hash = content_hash(&(&trials, &summary));
        let checks = config.checks.iter().map(|c| c.evaluate(&summary)).collect();
        Self {
            schema: REPORT_SCHEMA.into(),
            name: config.name.clone(),
            config_hash: content_hash(&config),
            config,
            result_hash,
            trials,
            summary,
            checks,
            timing,
            trajectories,
        }
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioSummary> {
        self.summary.iter().find(|s| s.scenario == name)
    }

    /// True when every configured check holds.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn flagged_trials(&self) -> Vec<usize> {
        self.trials
            .iter()
            .filter(|t| t.flag.is_some() || t.scenarios.iter().any(|s| s.flag.is_some()))
            .map(|t| t.trial)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per scenario and trial.
    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial", "scenario", "flag", "rms", "post_max_error", "band_fraction", "mean_sweeps"])?;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        for t in &self.trials {
            for s in &t.scenarios {
                w.write_record([
                    t.trial.to_string(),
                    s.name.clone(),
                    s.flag.clone().unwrap_or_default(),
                    join(&s.rms),
                    join(&s.post_max_error),
                    s.band_fraction.map(|b| b.to_string()).unwrap_or_default(),
                    s.mean_sweeps.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| ExperimentError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Writes `report.json`, `trials.csv` and one CSV per kept trajectory.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json())?;
        fs::write(dir.join("trials.csv"), self.to_csv()?)?;
        for tr in &self.trajectories {
            let file = fs::File::create(dir.join(format!("{}.csv", tr.scenario)))?;
            tr.write_csv(std::io::BufWriter::new(file))?;
        }
        Ok(())
    }
}

fn summarize(config: &ExperimentConfig, trials: &[TrialReport]) -> Vec<ScenarioSummary> {
    config
        .scenarios
        .iter()
        .map(|sc| {
            let runs: Vec<&ScenarioResult> = trials
                .iter()
                .flat_map(|t| t.scenarios.iter().filter(|s| s.name == sc.name))
                .collect();
            let done: Vec<&&ScenarioResult> = runs.iter().filter(|s| s.flag.is_none()).collect();
            let n_y = done.first().map_or(0, |s| s.rms.len());
            let mean = |f: fn(&ScenarioResult) -> &Vec<f64>, j: usize| {
                done.iter().map(|s| f(s)[j]).sum::<f64>() / done.len() as f64
            };
            let worst = |f: fn(&ScenarioResult) -> &Vec<f64>, j: usize| {
                done.iter().map(|s| f(s)[j]).fold(f64::NEG_INFINITY, f64::max)
            };
            ScenarioSummary {
                scenario: sc.name.clone(),
                completed: done.len(),
                flagged: trials.len() - done.len(),
                mean_rms: (0..n_y).map(|j| mean(|s| &s.rms, j)).collect(),
                worst_post_max_error: (0..n_y).map(|j| worst(|s| &s.post_max_error, j)).collect(),
                min_band_fraction: done
                    .iter()
                    .filter_map(|s| s.band_fraction)
                    .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.min(b)))),
                max_output: (0..n_y).map(|j| worst(|s| &s.max_output, j)).collect(),
            }
        })
        .collect()
}
