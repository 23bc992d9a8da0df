//! Seeded excitation, reference, meal and disturbance signals.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PlantError;
use crate::repro::stream_rng;

/// A signal family plus the seed that fixes its realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub seed: u64,
    #[serde(flatten)]
    pub kind: SignalKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    /// `amplitude * sin(frequency * t)` plus white Gaussian noise drawn once
    /// per sample.
    SinePlusNoise {
        amplitude: f64,
        frequency: f64,
        noise_std: f64,
    },
    /// Piecewise-constant random levels, low-passed by two cascaded
    /// first-order sections at `cutoff` (a critically damped second-order
    /// filter). All channels switch together; each channel's level is the
    /// shared draw scaled by an independent factor in `1 +- jitter`.
    FilteredRandomSteps {
        channels: usize,
        low: f64,
        high: f64,
        min_hold: f64,
        max_hold: f64,
        cutoff: f64,
        #[serde(default)]
        jitter: f64,
        #[serde(default)]
        noise_std: f64,
    },
    /// Two sinusoids per channel with random amplitude and frequencies,
    /// silenced inside the zero windows. The state guard is applied by
    /// [`Multisine::command`] during simulation.
    MultisineWithGuard(MultisineParams),
    MealTrain(MealParams),
    /// Steps of `amplitudes[j]` at `times[j]` on channel `j`, optionally
    /// low-passed like the random steps.
    StepDisturbance {
        amplitudes: Vec<f64>,
        times: Vec<f64>,
        #[serde(default)]
        cutoff: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultisineParams {
    /// Uniform range of the per-channel amplitude.
    pub amplitude_range: (f64, f64),
    /// Per channel, the uniform ranges of its two frequencies.
    pub frequency_ranges: Vec<[(f64, f64); 2]>,
    /// Time units per unit of the sinusoid argument and of the windows; the
    /// sampling period makes frequencies read in rad/sample.
    pub time_scale: f64,
    /// Half-open windows `(start, end]` of zero excitation.
    pub zero_windows: Vec<(f64, f64)>,
    pub guard_threshold: f64,
    pub guard_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealParams {
    pub days: usize,
    /// Nominal meal times as hours of the day.
    pub meal_hours: Vec<f64>,
    pub jitter_hours: f64,
    /// Peak of a single meal pulse.
    pub peak: f64,
    /// Relative spread of individual meal sizes.
    #[serde(default)]
    pub size_jitter: f64,
    /// Activity pulses (negative meals) placed uniformly over the run.
    #[serde(default)]
    pub negative_pulses: usize,
    #[serde(default)]
    pub negative_peak: f64,
    /// Time units per hour (60 for a model in minutes).
    pub time_units_per_hour: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    0.6
}

/// Samples `values[k]` (one entry per channel) at `t = k * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn channel(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[j]).collect()
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k]
    }
}

fn invalid(msg: impl Into<String>) -> PlantError {
    PlantError::InvalidSignal(msg.into())
}

fn sample_count(duration: f64, dt: f64) -> Result<usize, PlantError> {
    if !(duration > 0.0 && dt > 0.0 && duration.is_finite() && dt.is_finite()) {
        return Err(invalid(format!("duration {duration} and dt {dt} must be positive")));
    }
    Ok((duration / dt).round() as usize)
}

/// Two cascaded first-order low-pass sections with equal poles, advanced by
/// the exact solution for an input held over the step.
#[derive(Debug, Clone)]
pub struct CriticalFilter {
    stages: [f64; 2],
    cutoff: f64,
}

impl CriticalFilter {
    pub fn new(cutoff: f64) -> Self {
        Self {
            stages: [0.0; 2],
            cutoff,
        }
    }

    pub fn value(&self) -> f64 {
        self.stages[1]
    }

    pub fn advance(&mut self, input: f64, dt: f64) -> f64 {
        let decay = (-self.cutoff * dt).exp();
        let e1 = self.stages[0] - input;
        let e2 = self.stages[1] - input;
        self.stages[0] = input + decay * e1;
        self.stages[1] = input + decay * (e2 + self.cutoff * dt * e1);
        self.stages[1]
    }
}

const FILTER_SUBSTEPS: usize = 10;

// Low-passes each channel of `raw`, refining each sample interval.
fn filter_channels(raw: &[Vec<f64>], cutoff: f64, dt: f64) -> Vec<Vec<f64>> {
    let channels = raw.first().map_or(0, Vec::len);
    let mut filters = vec![CriticalFilter::new(cutoff); channels];
    let h = dt / FILTER_SUBSTEPS as f64;
    raw.iter()
        .map(|row| {
            let out: Vec<f64> = filters.iter().map(CriticalFilter::value).collect();
            for (f, &x) in filters.iter_mut().zip(row) {
                for _ in 0..FILTER_SUBSTEPS {
                    f.advance(x, h);
                }
            }
            out
        })
        .collect()
}

impl SignalSpec {
    pub fn new(seed: u64, kind: SignalKind) -> Self {
        Self { seed, kind }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        match &self.kind {
            SignalKind::SinePlusNoise { noise_std, .. } if *noise_std < 0.0 => {
                Err(invalid("noise_std must be non-negative"))
            }
            SignalKind::FilteredRandomSteps {
                channels,
                low,
                high,
                min_hold,
                max_hold,
                cutoff,
                jitter,
                noise_std,
            } => {
                if *channels == 0 || !(low <= high) || !(*min_hold > 0.0 && min_hold <= max_hold) {
                    return Err(invalid("random steps need channels, low <= high, 0 < min_hold <= max_hold"));
                }
                if !(*cutoff > 0.0) || *jitter < 0.0 || *noise_std < 0.0 {
                    return Err(invalid("cutoff must be positive, jitter and noise non-negative"));
                }
                Ok(())
            }
            SignalKind::MultisineWithGuard(p) => {
                let (lo, hi) = p.amplitude_range;
                if p.frequency_ranges.is_empty() || !(0.0 < lo && lo <= hi) || !(p.time_scale > 0.0) {
                    return Err(invalid("multisine needs channels, positive amplitudes and time scale"));
                }
                if p.frequency_ranges.iter().flatten().any(|(a, b)| !(0.0 < *a && a <= b)) {
                    return Err(invalid("frequency ranges must be positive and ordered"));
                }
                Ok(())
            }
            SignalKind::MealTrain(p) => {
                if !(p.peak > 0.0 && p.decay > 0.0 && p.time_units_per_hour > 0.0) || p.jitter_hours < 0.0 {
                    return Err(invalid("meal train needs positive peak, decay and time unit"));
                }
                Ok(())
            }
            SignalKind::StepDisturbance { amplitudes, times, cutoff } => {
                if amplitudes.is_empty() || amplitudes.len() != times.len() {
                    return Err(invalid("step disturbance needs one time per amplitude"));
                }
                if cutoff.is_some_and(|c| !(c > 0.0)) {
                    return Err(invalid("cutoff must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn channels(&self) -> usize {
        match &self.kind {
            SignalKind::FilteredRandomSteps { channels, .. } => *channels,
            SignalKind::MultisineWithGuard(p) => p.frequency_ranges.len(),
            SignalKind::StepDisturbance { amplitudes, .. } => amplitudes.len(),
            _ => 1,
        }
    }

    /// Samples the signal over `[0, duration)` at spacing `dt`.
    pub fn generate(&self, duration: f64, dt: f64) -> Result<Series, PlantError> {
        self.validate()?;
        let n = sample_count(duration, dt)?;
        let values = match &self.kind {
            SignalKind::SinePlusNoise {
                amplitude,
                frequency,
                noise_std,
            } => {
                let mut rng = stream_rng(self.seed, "signal/sine", &[]);
                let noise = Normal::new(0.0, *noise_std).map_err(|e| invalid(e.to_string()))?;
                (0..n)
                    .map(|k| {
                        let t = k as f64 * dt;
                        vec![amplitude * (frequency * t).sin() + noise.sample(&mut rng)]
                    })
                    .collect()
            }
            SignalKind::FilteredRandomSteps {
                channels,
                low,
                high,
                min_hold,
                max_hold,
                cutoff,
                jitter,
                noise_std,
            } => {
                let mut rng = stream_rng(self.seed, "signal/steps", &[]);
                let mut raw = Vec::with_capacity(n);
                let mut next_switch = 0.0;
                let mut level = vec![0.0; *channels];
                for k in 0..n {
                    let t = k as f64 * dt;
                    if t >= next_switch {
                        let shared = rng.random_range(*low..=*high);
                        for l in level.iter_mut() {
                            let factor = if *jitter > 0.0 { 1.0 + rng.random_range(-*jitter..=*jitter) } else { 1.0 };
                            *l = (shared * factor).clamp(*low, *high);
                        }
                        next_switch += rng.random_range(*min_hold..=*max_hold);
                    }
                    raw.push(level.clone());
                }
                let mut out = filter_channels(&raw, *cutoff, dt);
                if *noise_std > 0.0 {
                    let noise = Normal::new(0.0, *noise_std).map_err(|e| invalid(e.to_string()))?;
                    out.iter_mut().flatten().for_each(|v| *v += noise.sample(&mut rng));
                }
                out
            }
            SignalKind::MultisineWithGuard(_) => {
                let m = self.multisine()?;
                (0..n).map(|k| m.open_loop(k as f64 * dt)).collect()
            }
            SignalKind::MealTrain(_) => {
                let pulses = self.meal_pulses()?;
                let decay = match &self.kind {
                    SignalKind::MealTrain(p) => p.decay,
                    _ => unreachable!(),
                };
                (0..n)
                    .map(|k| vec![pulse_sum(&pulses, decay, k as f64 * dt)])
                    .collect()
            }
            SignalKind::StepDisturbance {
                amplitudes,
                times,
                cutoff,
            } => {
                let raw: Vec<Vec<f64>> = (0..n)
                    .map(|k| {
                        let t = k as f64 * dt;
                        amplitudes
                            .iter()
                            .zip(times)
                            .map(|(a, s)| if t >= *s { *a } else { 0.0 })
                            .collect()
                    })
                    .collect();
                match cutoff {
                    Some(c) => filter_channels(&raw, *c, dt),
                    None => raw,
                }
            }
        };
        Ok(Series { dt, values })
    }

    /// Draws the random amplitudes and frequencies of a multisine spec.
    pub fn multisine(&self) -> Result<Multisine, PlantError> {
        self.validate()?;
        let SignalKind::MultisineWithGuard(p) = &self.kind else {
            return Err(invalid("not a multisine spec"));
        };
        let mut rng = stream_rng(self.seed, "signal/multisine", &[]);
        let channels = p
            .frequency_ranges
            .iter()
            .map(|ranges| {
                let amplitude = rng.random_range(p.amplitude_range.0..=p.amplitude_range.1);
                let freqs = ranges.map(|(a, b)| rng.random_range(a..=b));
                (amplitude, freqs)
            })
            .collect();
        Ok(Multisine {
            channels,
            params: p.clone(),
        })
    }

    /// Realizes the pulses of a meal-train spec.
    pub fn meal_pulses(&self) -> Result<Vec<Pulse>, PlantError> {
        self.validate()?;
        let SignalKind::MealTrain(p) = &self.kind else {
            return Err(invalid("not a meal train spec"));
        };
        let mut rng = stream_rng(self.seed, "signal/meals", &[]);
        let hour = p.time_units_per_hour;
        let scale = p.decay * std::f64::consts::E;
        let mut pulses = Vec::new();
        for day in 0..p.days {
            for &h in &p.meal_hours {
                let jitter = if p.jitter_hours > 0.0 { rng.random_range(-p.jitter_hours..=p.jitter_hours) } else { 0.0 };
                let size = if p.size_jitter > 0.0 { 1.0 + rng.random_range(-p.size_jitter..=p.size_jitter) } else { 1.0 };
                pulses.push(Pulse {
                    onset: ((day as f64) * 24.0 + h + jitter) * hour,
                    weight: p.peak * size * scale,
                });
            }
        }
        let span = p.days as f64 * 24.0 * hour;
        for _ in 0..p.negative_pulses {
            pulses.push(Pulse {
                onset: rng.random_range(0.0..span),
                weight: -p.negative_peak * scale,
            });
        }
        pulses.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        Ok(pulses)
    }
}

/// One meal term `weight * (t - onset) * exp(-decay (t - onset))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub onset: f64,
    pub weight: f64,
}

pub fn pulse_shape(s: f64, decay: f64) -> f64 {
    if s < 0.0 {
        0.0
    } else {
        s * (-decay * s).exp()
    }
}

pub fn pulse_sum(pulses: &[Pulse], decay: f64, t: f64) -> f64 {
    pulses
        .iter()
        .map(|p| p.weight * pulse_shape(t - p.onset, decay))
        .sum()
}

/// Realized multisine excitation with its state guard.
#[derive(Debug, Clone, PartialEq)]
pub struct Multisine {
    /// Per channel: amplitude and the two frequencies.
    pub channels: Vec<(f64, [f64; 2])>,
    pub params: MultisineParams,
}

impl Multisine {
    fn in_zero_window(&self, s: f64) -> bool {
        self.params.zero_windows.iter().any(|&(a, b)| a < s && s <= b)
    }

    /// Excitation ignoring the guard.
    pub fn open_loop(&self, t: f64) -> Vec<f64> {
        let s = t / self.params.time_scale;
        let silent = self.in_zero_window(s);
        self.channels
            .iter()
            .map(|(a, [w1, w2])| if silent { 0.0 } else { a * (w1 * s).sin() + a * (w2 * s).sin() })
            .collect()
    }

    /// Excitation at time `t` given the guarded coordinates `z`: channels
    /// past the threshold get the restoring feedback instead.
    pub fn command(&self, t: f64, z: &[f64]) -> Vec<f64> {
        self.open_loop(t)
            .into_iter()
            .zip(z)
            .map(|(u, &zj)| {
                if zj.abs() >= self.params.guard_threshold {
                    -self.params.guard_gain * zj
                } else {
                    u
                }
            })
            .collect()
    }
}
