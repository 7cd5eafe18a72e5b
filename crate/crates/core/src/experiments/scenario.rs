//! Scenario files: TOML with a mandatory `schema = 1` line and dotted sections.
//!
//! ```toml
//! schema = 1
//! name = "circle-mpc"
//! steps = 300
//! seed = 7
//! tau_max = 2
//! buffer_length = 10
//! x0 = [6.0, 0.0, 0.0, 10.0]
//! disturbance_bound = 0.1
//! deviation = { kind = "circle", radius = 6.0, speed = 10.0 }
//!
//! [plant]
//! kind = "double_integrator_pair"   # or "scalar_exponential"
//! sample_time = 0.1
//! predictor = "exact"               # exact | euler | rk4
//! lipschitz = 0.05                  # optional, defaults to the analytic minimum
//!
//! [generator]
//! kind = "mpc"                      # or "static_feedback" with gain/saturation
//! horizon = 10
//! speed_constraint = 900.0
//!
//! [sensor_channel]
//! delay = { kind = "constant", delay = 0 }
//! loss = { kind = "periodic", period = 3, phase = 0 }
//!
//! [actuator_channel]
//! delay = { kind = "uniform", min = 0, max = 2 }
//!
//! [bounds]                          # optional, derived analytically when absent
//! lipschitz = 0.05
//! k = 10.0
//! h = 0.1
//! p = 1
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundParams;
use crate::compensation::{CompensatorConfig, FeedbackLaw, GeneratorSpec};
use crate::dynamics::{PlantModel, Predictor, StateVector};
use crate::error::{Error, Result};
use crate::mpc::MpcConfig;
use crate::transport::{ChannelModel, DelayModel, LossModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    DoubleIntegratorPair,
    ScalarExponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub kind: PlantKind,
    pub sample_time: f64,
    #[serde(default)]
    pub predictor: Predictor,
    /// Declared log-Lipschitz constant; must dominate both maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

impl PlantSpec {
    pub fn build(&self) -> Result<PlantModel> {
        let model = match self.kind {
            PlantKind::DoubleIntegratorPair => PlantModel::double_integrator_pair(self.sample_time, self.predictor)?,
            PlantKind::ScalarExponential => PlantModel::scalar_exponential(self.sample_time, self.predictor)?,
        };
        match self.lipschitz {
            Some(l) => model.with_lipschitz(l),
            None => Ok(model),
        }
    }
}

/// How far a state is from the control objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationMetric {
    /// `√((‖(x1,x3)‖₂ − radius)² + (‖(x2,x4)‖₂ − speed)²)`.
    Circle { radius: f64, speed: f64 },
    /// `‖x‖₂`.
    Norm,
}

impl Default for DeviationMetric {
    fn default() -> Self {
        DeviationMetric::Norm
    }
}

impl DeviationMetric {
    pub fn circle() -> Self {
        DeviationMetric::Circle {
            radius: 6.0,
            speed: 10.0,
        }
    }

    pub fn eval(&self, x: &StateVector) -> f64 {
        match *self {
            DeviationMetric::Circle { radius, speed } => {
                let pos = x[0].hypot(x[2]) - radius;
                let vel = x[1].hypot(x[3]) - speed;
                pos.hypot(vel)
            }
            DeviationMetric::Norm => x.norm(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    pub tau_max: usize,
    pub buffer_length: usize,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub disturbance_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub startup_input: Option<Vec<f64>>,
    #[serde(default)]
    pub deviation: DeviationMetric,
    pub plant: PlantSpec,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub sensor_channel: ChannelModel,
    #[serde(default)]
    pub actuator_channel: ChannelModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundParams>,
}

fn default_name() -> String {
    "scenario".into()
}

/// Bound on `‖x‖` used when deriving error constants for predictors whose state
/// matrix differs from the exact one.
const STATE_NORM_ALLOWANCE: f64 = 100.0;

impl Scenario {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| e.to_string())?;
        if scenario.schema != SCHEMA_VERSION {
            return Err(format!(
                "unsupported scenario schema {} (expected {SCHEMA_VERSION})",
                scenario.schema
            ));
        }
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// The circle-tracking example: MPC on two double integrators, only
    /// every third sensor transmission succeeds, uniform noise of size 0.1.
    pub fn circle_mpc(tau_max: usize) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            name: "circle-mpc".into(),
            steps: 300,
            seed: 2024,
            tau_max,
            buffer_length: 10,
            x0: vec![6.0, 0.0, 0.0, 10.0],
            disturbance_bound: 0.1,
            startup_input: None,
            deviation: DeviationMetric::circle(),
            plant: PlantSpec {
                kind: PlantKind::DoubleIntegratorPair,
                sample_time: 0.1,
                predictor: Predictor::Exact,
                lipschitz: Some(0.05),
            },
            generator: GeneratorSpec::Mpc(MpcConfig {
                speed_constraint: 900.0,
                ..MpcConfig::default()
            }),
            sensor_channel: ChannelModel {
                delay: DelayModel::Constant { delay: 0 },
                loss: LossModel::Periodic { period: 3, phase: 0 },
            },
            actuator_channel: ChannelModel {
                delay: DelayModel::Constant { delay: tau_max },
                loss: LossModel::None,
            },
            bounds: None,
        }
    }

    /// PD feedback stabilizing both double integrators at the origin.
    pub fn integrator_static(tau_max: usize) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            name: "integrator-static".into(),
            steps: 200,
            seed: 11,
            tau_max,
            buffer_length: 15,
            x0: vec![1.0, 0.0, -1.0, 0.5],
            disturbance_bound: 0.0,
            startup_input: None,
            deviation: DeviationMetric::Norm,
            plant: PlantSpec {
                kind: PlantKind::DoubleIntegratorPair,
                sample_time: 0.1,
                predictor: Predictor::Exact,
                lipschitz: Some(0.05),
            },
            generator: GeneratorSpec::StaticFeedback(FeedbackLaw::double_integrator_pd(4.0, 3.0, Some(10.0))),
            sensor_channel: ChannelModel::ideal(),
            actuator_channel: ChannelModel {
                delay: DelayModel::Constant { delay: tau_max },
                loss: LossModel::None,
            },
            bounds: None,
        }
    }

    pub fn compensator(&self) -> CompensatorConfig {
        CompensatorConfig {
            tau_max: self.tau_max,
            m: self.buffer_length,
            generator: self.generator.clone(),
        }
    }

    /// The declared bound parameters, or the analytic ones for this plant and
    /// generator. Fails when no analytic input bound exists and the predictor is inexact.
    pub fn bound_params(&self, model: &PlantModel) -> Result<BoundParams> {
        if let Some(p) = self.bounds {
            p.validate()?;
            return Ok(p);
        }
        let u_max = match (self.generator.input_bound(), model.predictor) {
            (Some(u), _) => u,
            (None, Predictor::Exact) => 0.0,
            (None, _) => {
                return Err(Error::Config(
                    "bound parameters must be declared for an unsaturated generator with an inexact predictor".into(),
                ))
            }
        };
        Ok(BoundParams::derive(model, u_max, STATE_NORM_ALLOWANCE))
    }

    /// Checks every cross-module constraint; returns the plant model on success.
    pub fn validate(&self) -> Result<PlantModel> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        let model = self.plant.build()?;
        if self.x0.len() != model.state_dim() {
            return Err(Error::Dimension {
                context: "x0",
                expected: model.state_dim(),
                found: self.x0.len(),
            });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("x0 must be finite".into()));
        }
        if let Some(u) = &self.startup_input {
            if u.len() != model.input_dim() {
                return Err(Error::Dimension {
                    context: "startup_input",
                    expected: model.input_dim(),
                    found: u.len(),
                });
            }
        }
        if !(self.disturbance_bound >= 0.0 && self.disturbance_bound.is_finite()) {
            return Err(Error::Config("disturbance_bound must be finite and non-negative".into()));
        }
        self.sensor_channel.validate("sensor_channel")?;
        self.actuator_channel.validate("actuator_channel")?;
        if self.actuator_channel.delay_bound() > self.tau_max {
            return Err(Error::Config(format!(
                "actuator delay bound {} exceeds tau_max {}",
                self.actuator_channel.delay_bound(),
                self.tau_max
            )));
        }
        if let DeviationMetric::Circle { .. } = self.deviation {
            if model.state_dim() != 4 {
                return Err(Error::Config("circle deviation metric needs a 4-state plant".into()));
            }
        }
        crate::compensation::InputGenerator::new(self.generator.clone(), self.buffer_length, &model)?;
        self.bound_params(&model)?;
        Ok(model)
    }

    /// Same scenario with another `τ_max`; actuator delays above it are clamped.
    pub fn with_tau_max(&self, tau_max: usize) -> Self {
        let mut s = self.clone();
        s.tau_max = tau_max;
        s.actuator_channel.delay = match s.actuator_channel.delay {
            DelayModel::Constant { delay } => DelayModel::Constant {
                delay: delay.min(tau_max),
            },
            DelayModel::Uniform { min, max } => DelayModel::Uniform {
                min: min.min(tau_max),
                max: max.min(tau_max),
            },
        };
        s
    }
}
