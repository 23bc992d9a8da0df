use serde::{Deserialize, Serialize};

use super::report::ScenarioSummary;

/// An acceptance threshold on the Monte Carlo summary. A check on a
/// scenario also fails when any trial of that scenario was flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Check {
    /// Mean RMS per channel at most `max`.
    MeanRms { scenario: String, max: Vec<f64> },
    /// Largest post-transient |r - y| over all trials, per channel.
    PostMaxError { scenario: String, max: Vec<f64> },
    /// Smallest time-in-band fraction over all trials at least `min`.
    BandFraction { scenario: String, min: f64 },
    /// Some output sample, in some trial, above `level` on channel 0.
    Exceeds { scenario: String, level: f64 },
    /// Per-channel relative gap between two scenarios' mean RMS,
    /// `|a - b| / min(a, b)`, at most `max_relative`.
    RmsParity {
        scenarios: (String, String),
        max_relative: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    /// The measured values the check compared.
    pub values: Vec<f64>,
    pub note: Option<String>,
}

impl Check {
    pub fn scenarios(&self) -> Vec<&str> {
        match self {
            Check::MeanRms { scenario, .. }
            | Check::PostMaxError { scenario, .. }
            | Check::BandFraction { scenario, .. }
            | Check::Exceeds { scenario, .. } => vec![scenario],
            Check::RmsParity { scenarios, .. } => vec![&scenarios.0, &scenarios.1],
        }
    }

    pub fn evaluate(&self, summary: &[ScenarioSummary]) -> CheckOutcome {
        let find = |name: &str| summary.iter().find(|s| s.scenario == name);
        let mut found = Vec::new();
        for name in self.scenarios() {
            match find(name) {
                Some(s) if s.flagged == 0 && s.completed > 0 => found.push(s),
                Some(s) => return self.fail(vec![], format!("{name}: {} flagged trial(s)", s.flagged)),
                None => return self.fail(vec![], format!("{name}: no such scenario")),
            }
        }
        let (values, passed) = match self {
            Check::MeanRms { max, .. } => {
                let v = found[0].mean_rms.clone();
                let ok = v.len() == max.len() && v.iter().zip(max).all(|(a, m)| a <= m);
                (v, ok)
            }
            Check::PostMaxError { max, .. } => {
                let v = found[0].worst_post_max_error.clone();
                let ok = v.len() == max.len() && v.iter().zip(max).all(|(a, m)| a <= m);
                (v, ok)
            }
            Check::BandFraction { min, .. } => match found[0].min_band_fraction {
                Some(b) => (vec![b], b >= *min),
                None => return self.fail(vec![], "scenario has no band".into()),
            },
            Check::Exceeds { level, .. } => {
                let top = found[0].max_output.first().copied().unwrap_or(f64::NEG_INFINITY);
                (vec![top], top > *level)
            }
            Check::RmsParity { max_relative, .. } => {
                let (a, b) = (&found[0].mean_rms, &found[1].mean_rms);
                let gaps: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.min(*y).max(f64::MIN_POSITIVE)).collect();
                let ok = a.len() == b.len() && gaps.iter().all(|g| g <= max_relative);
                (gaps, ok)
            }
        };
        CheckOutcome {
            check: self.clone(),
            passed,
            values,
            note: None,
        }
    }

    fn fail(&self, values: Vec<f64>, note: String) -> CheckOutcome {
        CheckOutcome {
            check: self.clone(),
            passed: false,
            values,
            note: Some(note),
        }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let what = match &self.check {
            Check::MeanRms { scenario, max } => format!("{scenario}: mean RMS <= {max:?}"),
            Check::PostMaxError { scenario, max } => format!("{scenario}: post-transient max error <= {max:?}"),
            Check::BandFraction { scenario, min } => format!("{scenario}: time in band >= {min}"),
            Check::Exceeds { scenario, level } => format!("{scenario}: output exceeds {level}"),
            Check::RmsParity { scenarios, max_relative } => {
                format!("{} vs {}: relative RMS gap <= {max_relative}", scenarios.0, scenarios.1)
            }
        };
        write!(f, "{verdict} {what}, measured {:.4?}", self.values)?;
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}
