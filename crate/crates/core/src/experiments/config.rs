use serde::{Deserialize, Serialize};

use super::{Check, ExperimentError};
use crate::controller::{ControllerConfig, SolverMode};
use crate::plants::signals::{MealParams, MultisineParams, SignalKind};
use crate::plants::{DuffingParams, PatientParams, PlantModel, RobotParams};
use crate::poly::Interval;
use crate::sysid::{ModelSpec, ModelStructure};

pub const EXPERIMENT_SCHEMA: &str = "polyinv-experiment/1";

/// Measurement noise added to every output sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    /// Zero-mean Gaussian with standard deviation `ratio` times the standard
    /// deviation of the clean design-run output, per channel.
    Relative { ratio: f64 },
    /// Uniform on `[-amplitude, amplitude]`.
    Uniform { amplitude: f64 },
}

/// Insulin delivery built around the meal times: a piecewise-constant basal
/// rate plus a bolus shortly before each meal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsulinSchedule {
    pub basal: f64,
    /// Each basal segment is scaled by a factor drawn from this range.
    pub basal_factor: (f64, f64),
    /// Range of segment lengths, hours.
    pub basal_hold_hours: (f64, f64),
    /// Bolus infusion rate.
    pub bolus: f64,
    /// Each bolus is scaled by a factor drawn from this range.
    pub bolus_factor: (f64, f64),
    pub bolus_minutes: f64,
    /// Bolus start before the meal onset, minutes.
    pub lead_minutes: f64,
}

/// Source of the applied input in open-loop runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Excitation {
    /// A generated signal; a guarded multisine feeds back the plant outputs.
    Signal { signal: SignalKind },
    Insulin { schedule: InsulinSchedule },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGeneration {
    /// Number of recorded samples.
    pub length: usize,
    pub excitation: Excitation,
    #[serde(default)]
    pub meals: Option<SignalKind>,
    pub noise: NoiseSpec,
}

/// A fitted model plus the controller that inverts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSetup {
    pub name: String,
    pub model: ModelSpec,
    pub controller: ControllerConfig,
    /// When set, every upper box bound becomes this factor times the largest
    /// design-run input, in model units.
    #[serde(default)]
    pub upper_bound_from_data: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReferenceSpec {
    Constant { values: Vec<f64> },
    Signal { signal: SignalKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Policy {
    Controller { setup: String },
    Zero,
    Excitation { excitation: Excitation },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub samples: usize,
    pub policy: Policy,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub output_disturbance: Option<SignalKind>,
    #[serde(default)]
    pub meals: Option<SignalKind>,
    pub noise: NoiseSpec,
    /// Constant input (physical units) the plant settles under before the
    /// run; it also fills the controller's input history.
    #[serde(default)]
    pub initial_input: Option<Vec<f64>>,
    #[serde(default)]
    pub settle_time: f64,
    /// Samples excluded from the post-transient metrics.
    #[serde(default)]
    pub transient: usize,
    /// Band for the time-in-range metric.
    #[serde(default)]
    pub band: Option<(f64, f64)>,
    /// Label of the random test streams; scenarios sharing it see the same
    /// reference, disturbance, meal and noise realizations. Defaults to
    /// the name.
    #[serde(default)]
    pub stream: Option<String>,
}

impl Scenario {
    pub fn stream_label(&self) -> &str {
        self.stream.as_deref().unwrap_or(&self.name)
    }
}

/// Physical value = model value times scale, per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: String,
    pub name: String,
    pub plant: PlantModel,
    pub sample_period: f64,
    pub substeps: usize,
    pub data: DataGeneration,
    pub scaling: Scaling,
    pub controllers: Vec<ControllerSetup>,
    pub scenarios: Vec<Scenario>,
    pub trials: usize,
    pub seed: u64,
    /// A closed-loop output farther than this many design-run output ranges
    /// from the design-run midpoint aborts the scenario.
    pub divergence_factor: f64,
    /// Thresholds the run is judged against; empty means nothing to judge.
    #[serde(default)]
    pub checks: Vec<Check>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn setup(&self, name: &str) -> Option<&ControllerSetup> {
        self.controllers.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.schema != EXPERIMENT_SCHEMA {
            return bad(format!("schema {:?}, expected {EXPERIMENT_SCHEMA:?}", self.schema));
        }
        if !(self.sample_period > 0.0) || self.substeps == 0 || self.trials == 0 {
            return bad("sample_period, substeps and trials must be positive".into());
        }
        if !(self.divergence_factor > 0.0) {
            return bad("divergence_factor must be positive".into());
        }
        let (n_u, n_y) = (self.plant.input_dim(), self.plant.output_dim());
        if self.scaling.input.len() != n_u || self.scaling.output.len() != n_y {
            return bad(format!("scaling needs {n_u} input and {n_y} output entries"));
        }
        if self.scaling.input.iter().chain(&self.scaling.output).any(|s| !(*s > 0.0)) {
            return bad("scales must be positive".into());
        }
        check_noise(&self.data.noise)?;
        if self.data.length == 0 {
            return bad("data length must be positive".into());
        }
        for c in &self.controllers {
            c.model.validate().map_err(|e| ExperimentError::Config(format!("{}: {e}", c.name)))?;
            if c.model.input_dim != n_u || c.model.output_dim != n_y {
                return bad(format!("{}: model dimensions do not match the plant", c.name));
            }
            c.controller
                .validate()
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", c.name)))?;
        }
        for s in &self.scenarios {
            check_noise(&s.noise)?;
            if s.samples == 0 || s.transient >= s.samples {
                return bad(format!("{}: need transient < samples", s.name));
            }
            if let Policy::Controller { setup } = &s.policy {
                if self.setup(setup).is_none() {
                    return bad(format!("{}: unknown controller {setup:?}", s.name));
                }
            }
            if let ReferenceSpec::Constant { values } = &s.reference {
                if values.len() != n_y {
                    return bad(format!("{}: reference needs {n_y} values", s.name));
                }
            }
            if let Some(u) = &s.initial_input {
                if u.len() != n_u {
                    return bad(format!("{}: initial_input needs {n_u} values", s.name));
                }
            }
        }
        for c in &self.checks {
            for name in c.scenarios() {
                if !self.scenarios.iter().any(|s| s.name == name) {
                    return bad(format!("check refers to unknown scenario {name:?}"));
                }
            }
        }
        Ok(())
    }

    pub fn duffing() -> Self {
        let horizon = 8;
        // Cubic in the past, affine in the future commands: the noisy design
        // record does not pin down the higher u-powers.
        let model = ModelSpec::new(4, horizon, 3, 1, 1).with_structure(ModelStructure::AffineInU);
        let mut controller = ControllerConfig::uniform(SolverMode::Affine, Interval::symmetric(2.0), horizon).with_mu(1e-2);
        controller.max_sweeps = 30;
        controller.stop_tol = 1e-10;
        let steps = SignalKind::FilteredRandomSteps {
            channels: 1,
            low: -1.0,
            high: 1.0,
            min_hold: 10.0,
            max_hold: 20.0,
            cutoff: 2.0,
            jitter: 0.0,
            noise_std: 0.0,
        };
        let zero = ReferenceSpec::Constant { values: vec![0.0] };
        let noise = NoiseSpec::Relative { ratio: 0.03 };
        let ctl = Policy::Controller { setup: "affine".into() };
        Self {
            schema: EXPERIMENT_SCHEMA.into(),
            name: "duffing".into(),
            plant: PlantModel::Duffing(DuffingParams::default()),
            sample_period: 0.1,
            substeps: 10,
            data: DataGeneration {
                length: 4000,
                excitation: Excitation::Signal {
                    signal: SignalKind::SinePlusNoise {
                        amplitude: 0.3,
                        frequency: 1.0,
                        noise_std: 0.2,
                    },
                },
                meals: None,
                noise: noise.clone(),
            },
            scaling: Scaling {
                input: vec![1.0],
                output: vec![1.0],
            },
            controllers: vec![ControllerSetup {
                name: "affine".into(),
                model,
                controller,
                upper_bound_from_data: None,
            }],
            scenarios: vec![
                Scenario {
                    name: "tracking".into(),
                    samples: 8000,
                    policy: ctl.clone(),
                    reference: ReferenceSpec::Signal { signal: steps },
                    output_disturbance: None,
                    meals: None,
                    noise: noise.clone(),
                    initial_input: None,
                    settle_time: 0.0,
                    transient: 0,
                    band: None,
                    stream: None,
                },
                Scenario {
                    name: "disturbance".into(),
                    samples: 800,
                    policy: ctl.clone(),
                    reference: zero.clone(),
                    output_disturbance: Some(SignalKind::StepDisturbance {
                        amplitudes: vec![0.5],
                        times: vec![20.0],
                        cutoff: None,
                    }),
                    meals: None,
                    noise,
                    initial_input: None,
                    settle_time: 0.0,
                    transient: 400,
                    band: None,
                    stream: None,
                },
                Scenario {
                    name: "regulation".into(),
                    samples: 1000,
                    policy: ctl,
                    reference: zero,
                    output_disturbance: None,
                    meals: None,
                    noise: NoiseSpec::None,
                    initial_input: None,
                    settle_time: 0.0,
                    transient: 0,
                    band: None,
                    stream: None,
                },
            ],
            trials: 5,
            seed: 1,
            divergence_factor: 10.0,
            checks: vec![
                Check::MeanRms {
                    scenario: "tracking".into(),
                    max: vec![0.05],
                },
                Check::PostMaxError {
                    scenario: "disturbance".into(),
                    max: vec![0.1],
                },
            ],
        }
    }

    pub fn robot() -> Self {
        let horizon = 5;
        // Two sines per channel leave the quadratic terms unidentifiable, so
        // the model is linear; the long lag window averages the output noise.
        let general = ModelSpec::new(8, horizon, 1, 2, 2);
        let affine = general.clone().with_structure(ModelStructure::AffineInU);
        let bounds = Interval::symmetric(5.0);
        let mut ctl_general = ControllerConfig::uniform(SolverMode::General, bounds, 2 * horizon).with_mu(1e-2);
        ctl_general.max_sweeps = 30;
        ctl_general.stop_tol = 1e-10;
        let ctl_affine = ControllerConfig {
            mode: SolverMode::Affine,
            ..ctl_general.clone()
        };
        let pi = std::f64::consts::PI;
        let steps = SignalKind::FilteredRandomSteps {
            channels: 2,
            low: -pi,
            high: pi,
            min_hold: 2.0,
            max_hold: 5.0,
            cutoff: 10.0,
            jitter: 0.1,
            noise_std: 0.0,
        };
        let noise = NoiseSpec::Uniform { amplitude: 0.02 };
        let zero = ReferenceSpec::Constant { values: vec![0.0, 0.0] };
        let tracking = |setup: &str| Scenario {
            name: format!("tracking_{setup}"),
            samples: 5000,
            policy: Policy::Controller { setup: setup.into() },
            reference: ReferenceSpec::Signal { signal: steps.clone() },
            output_disturbance: None,
            meals: None,
            noise: noise.clone(),
            initial_input: None,
            settle_time: 0.0,
            transient: 0,
            band: None,
            stream: Some("tracking".into()),
        };
        Self {
            schema: EXPERIMENT_SCHEMA.into(),
            name: "robot".into(),
            plant: PlantModel::Robot(RobotParams::default()),
            sample_period: 0.02,
            substeps: 10,
            data: DataGeneration {
                length: 5000,
                excitation: Excitation::Signal {
                    signal: SignalKind::MultisineWithGuard(MultisineParams {
                        amplitude_range: (50.0, 150.0),
                        frequency_ranges: vec![[(0.05, 0.09), (0.05, 0.11)], [(0.04, 0.1), (0.7, 1.2)]],
                        time_scale: 0.02,
                        zero_windows: vec![(500.0, 1000.0), (1500.0, 2000.0), (2500.0, 3000.0), (3500.0, 4000.0)],
                        guard_threshold: 1.75,
                        guard_gain: 20.0,
                    }),
                },
                meals: None,
                noise: noise.clone(),
            },
            scaling: Scaling {
                input: vec![100.0, 100.0],
                output: vec![1.0, 1.0],
            },
            controllers: vec![
                ControllerSetup {
                    name: "general".into(),
                    model: general,
                    controller: ctl_general,
                    upper_bound_from_data: None,
                },
                ControllerSetup {
                    name: "affine".into(),
                    model: affine,
                    controller: ctl_affine,
                    upper_bound_from_data: None,
                },
            ],
            scenarios: vec![
                tracking("general"),
                tracking("affine"),
                Scenario {
                    name: "disturbance".into(),
                    samples: 1000,
                    policy: Policy::Controller { setup: "general".into() },
                    reference: zero.clone(),
                    output_disturbance: Some(SignalKind::StepDisturbance {
                        amplitudes: vec![1.0, 1.0],
                        times: vec![2.0, 10.0],
                        cutoff: Some(10.0),
                    }),
                    meals: None,
                    noise,
                    initial_input: None,
                    settle_time: 0.0,
                    transient: 0,
                    band: None,
                    stream: None,
                },
                Scenario {
                    name: "regulation".into(),
                    samples: 1000,
                    policy: Policy::Controller { setup: "general".into() },
                    reference: zero,
                    output_disturbance: None,
                    meals: None,
                    noise: NoiseSpec::None,
                    initial_input: None,
                    settle_time: 0.0,
                    transient: 0,
                    band: None,
                    stream: None,
                },
            ],
            trials: 10,
            seed: 2,
            divergence_factor: 10.0,
            checks: vec![
                Check::MeanRms {
                    scenario: "tracking_general".into(),
                    max: vec![0.35, 0.30],
                },
                Check::MeanRms {
                    scenario: "tracking_affine".into(),
                    max: vec![0.35, 0.30],
                },
                Check::RmsParity {
                    scenarios: ("tracking_general".into(), "tracking_affine".into()),
                    max_relative: 0.25,
                },
            ],
        }
    }

    pub fn diabetes() -> Self {
        let patient = PatientParams::default();
        // Insulin acts over hours, so the horizon spans three of them. Linear:
        // with quadratic terms the fitted insulin gain depends on the state
        // and changes sign at low glucose, where the inversion then doses more.
        let horizon = 60;
        let model = ModelSpec::new(5, horizon, 1, 1, 1).with_structure(ModelStructure::SimoConstU);
        let controller = ControllerConfig::new(SolverMode::SimoConst, vec![Interval::new(0.0, 1.0).expect("ordered")])
            .with_mu(1e-2);
        let target = 120.0;
        let basal = patient.basal_rate_for(target);
        let meals = |negative: usize| {
            SignalKind::MealTrain(MealParams {
                days: 10,
                meal_hours: vec![7.0, 13.0, 20.0],
                jitter_hours: 1.0,
                peak: 8.0 * patient.v_g,
                size_jitter: 0.3,
                negative_pulses: negative,
                negative_peak: 2.0 * patient.v_g,
                time_units_per_hour: 60.0,
                decay: 0.6,
            })
        };
        let noise = NoiseSpec::Relative { ratio: 0.03 };
        let band = Some((80.0, 180.0));
        let day = 480;
        let design = InsulinSchedule {
            basal,
            basal_factor: (0.2, 1.8),
            basal_hold_hours: (2.0, 6.0),
            bolus: 4.0 * basal,
            bolus_factor: (0.5, 1.5),
            bolus_minutes: 15.0,
            lead_minutes: 15.0,
        };
        let heuristic = InsulinSchedule {
            basal: 0.3 * basal,
            basal_factor: (1.0, 1.0),
            basal_hold_hours: (24.0, 24.0),
            bolus: 3.0 * basal,
            bolus_factor: (1.0, 1.0),
            bolus_minutes: 15.0,
            lead_minutes: 15.0,
        };
        let scenario = |name: &str, policy: Policy, initial: Option<f64>| Scenario {
            name: name.into(),
            samples: 10 * day,
            policy,
            reference: ReferenceSpec::Constant { values: vec![target] },
            output_disturbance: None,
            meals: Some(meals(1)),
            noise: noise.clone(),
            initial_input: initial.map(|u| vec![u]),
            settle_time: if initial.is_some() { 3.0 * 24.0 * 60.0 } else { 0.0 },
            transient: day / 3,
            band,
            stream: None,
        };
        Self {
            schema: EXPERIMENT_SCHEMA.into(),
            name: "diabetes".into(),
            plant: PlantModel::Patient(patient),
            sample_period: 3.0,
            substeps: 10,
            data: DataGeneration {
                length: 10 * day,
                excitation: Excitation::Insulin { schedule: design },
                meals: Some(meals(1)),
                noise: noise.clone(),
            },
            scaling: Scaling {
                input: vec![0.01],
                output: vec![100.0],
            },
            controllers: vec![ControllerSetup {
                name: "simo".into(),
                model,
                controller,
                upper_bound_from_data: Some(2.0),
            }],
            scenarios: vec![
                scenario("no_insulin", Policy::Zero, None),
                scenario(
                    "patient",
                    Policy::Excitation {
                        excitation: Excitation::Insulin { schedule: heuristic },
                    },
                    Some(0.3 * basal),
                ),
                scenario("controller", Policy::Controller { setup: "simo".into() }, Some(basal)),
                Scenario {
                    name: "basal_hold".into(),
                    samples: 2 * day,
                    policy: Policy::Controller { setup: "simo".into() },
                    reference: ReferenceSpec::Constant { values: vec![patient.g_b] },
                    output_disturbance: None,
                    meals: None,
                    noise: NoiseSpec::None,
                    initial_input: None,
                    settle_time: 0.0,
                    transient: 0,
                    band: None,
                    stream: None,
                },
            ],
            trials: 5,
            seed: 3,
            divergence_factor: 10.0,
            checks: vec![
                Check::BandFraction {
                    scenario: "controller".into(),
                    min: 0.95,
                },
                Check::Exceeds {
                    scenario: "no_insulin".into(),
                    level: 180.0,
                },
                Check::PostMaxError {
                    scenario: "basal_hold".into(),
                    max: vec![5.0],
                },
            ],
        }
    }

    /// Built-in configuration by experiment name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "duffing" => Some(Self::duffing()),
            "robot" => Some(Self::robot()),
            "diabetes" => Some(Self::diabetes()),
            _ => None,
        }
    }
}

fn check_noise(noise: &NoiseSpec) -> Result<(), ExperimentError> {
    let ok = match noise {
        NoiseSpec::None => true,
        NoiseSpec::Relative { ratio } => *ratio >= 0.0,
        NoiseSpec::Uniform { amplitude } => *amplitude >= 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(ExperimentError::Config("noise levels must be non-negative".into()))
    }
}
