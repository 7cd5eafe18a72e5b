//! Randomized check suite: consistency, the robustness bound on `v` and the
//! auxiliary-loop equivalence over many generated scenarios.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::run::{replay_auxiliary, run_scenario, RunStatus};
use super::scenario::{DeviationMetric, PlantKind, PlantSpec, Scenario, SCHEMA_VERSION};
use crate::compensation::{FeedbackLaw, GeneratorSpec};
use crate::derive_seed;
use crate::dynamics::Predictor;
use crate::error::Result;
use crate::mpc::MpcConfig;
use crate::transport::{ChannelModel, DelayModel, LossModel};

const SCENARIO_STREAM: u64 = 0x5CE7_A210;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckSuiteConfig {
    pub runs: usize,
    pub seed: u64,
    /// Also replay the first `replays` runs as the auxiliary loop.
    pub replays: usize,
    /// Steps for static-feedback runs; MPC runs use half as many.
    pub steps: usize,
}

impl Default for CheckSuiteConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            seed: 1,
            replays: 20,
            steps: 120,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub index: usize,
    pub name: String,
    pub status: RunStatus,
    pub consistency_violations: usize,
    pub checked_inputs: usize,
    pub bound_satisfied: Option<bool>,
    pub v_observed: Option<f64>,
    pub v_bound: Option<f64>,
    /// `None` when the run was not replayed.
    pub equivalent: Option<bool>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.status == RunStatus::Ok
            && self.consistency_violations == 0
            && self.bound_satisfied == Some(true)
            && self.equivalent != Some(false)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckSummary {
    pub outcomes: Vec<CheckOutcome>,
    pub consistency_violations: usize,
    pub bound_failures: usize,
    pub equivalence_failures: usize,
    pub replayed: usize,
    pub not_ok: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CheckSummary {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(CheckOutcome::passed)
    }
}

fn random_channel(rng: &mut ChaCha8Rng, max_delay: usize, max_period: usize) -> ChannelModel {
    let hi = rng.random_range(0..=max_delay);
    let delay = if rng.random::<bool>() {
        DelayModel::Constant { delay: hi }
    } else {
        DelayModel::Uniform {
            min: rng.random_range(0..=hi),
            max: hi,
        }
    };
    let loss = match rng.random_range(0..3) {
        0 => LossModel::None,
        1 => LossModel::Bernoulli {
            p: rng.random_range(0.0..0.25),
        },
        _ => {
            let period = rng.random_range(1..=max_period);
            LossModel::Periodic {
                period,
                phase: rng.random_range(0..period),
            }
        }
    };
    ChannelModel { delay, loss }
}

fn random_predictor(rng: &mut ChaCha8Rng) -> Predictor {
    [Predictor::Exact, Predictor::Euler, Predictor::Rk4][rng.random_range(0..3)]
}

/// The `index`-th scenario of a suite. Even indices use static feedback
/// (on the double integrator pair or the scalar plant), odd ones the MPC.
/// Buffer lengths exceed the longest actuator loss gap the patterns can
/// produce with non-negligible probability, so runs do not starve.
pub fn random_scenario(seed: u64, index: usize, steps: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ SCENARIO_STREAM, index as u64));
    let tau_max = rng.random_range(0..=5);
    let disturbance_bound = if rng.random_range(0..4) == 0 {
        0.0
    } else {
        rng.random_range(0.0..0.2)
    };
    let sensor_channel = random_channel(&mut rng, 4, 4);
    let actuator_channel = random_channel(&mut rng, tau_max, 3);
    let predictor = random_predictor(&mut rng);
    let base = Scenario {
        schema: SCHEMA_VERSION,
        name: format!("random-{index}"),
        steps,
        seed: rng.random(),
        tau_max,
        buffer_length: 10,
        x0: Vec::new(),
        disturbance_bound,
        startup_input: None,
        deviation: DeviationMetric::Norm,
        plant: PlantSpec {
            kind: PlantKind::DoubleIntegratorPair,
            sample_time: 0.1,
            predictor,
            lipschitz: None,
        },
        generator: GeneratorSpec::StaticFeedback(FeedbackLaw::zero(2, 4)),
        sensor_channel,
        actuator_channel,
        bounds: None,
    };
    if index % 2 == 1 {
        let mut x0 = vec![6.0, 0.0, 0.0, 10.0];
        for v in &mut x0 {
            *v += rng.random_range(-0.3..0.3);
        }
        return Scenario {
            steps: (steps / 2).max(1),
            x0,
            deviation: DeviationMetric::circle(),
            generator: GeneratorSpec::Mpc(MpcConfig {
                speed_constraint: 900.0,
                ..MpcConfig::default()
            }),
            ..base
        };
    }
    let buffer_length = rng.random_range(10..=20);
    if index % 4 == 2 {
        let gain = rng.random_range(1.5..4.0);
        return Scenario {
            buffer_length,
            x0: vec![rng.random_range(-2.0..2.0)],
            plant: PlantSpec {
                kind: PlantKind::ScalarExponential,
                ..base.plant
            },
            generator: GeneratorSpec::StaticFeedback(FeedbackLaw {
                gain: vec![vec![gain]],
                saturation: Some(20.0),
            }),
            ..base
        };
    }
    let kp = rng.random_range(1.0..6.0);
    let kd = rng.random_range(1.5..5.0);
    Scenario {
        buffer_length,
        x0: (0..4).map(|_| rng.random_range(-2.0..2.0)).collect(),
        generator: GeneratorSpec::StaticFeedback(FeedbackLaw::double_integrator_pd(kp, kd, Some(10.0))),
        ..base
    }
}

/// Runs the suite in parallel. Configuration errors abort it; loop failures
/// are recorded as failed outcomes.
pub fn run_check_suite(config: &CheckSuiteConfig) -> Result<CheckSummary> {
    let started = Instant::now();
    let outcomes = (0..config.runs)
        .into_par_iter()
        .map(|i| {
            let scenario = random_scenario(config.seed, i, config.steps);
            let record = run_scenario(&scenario)?;
            let equivalent = if i < config.replays && record.is_ok() {
                Some(replay_auxiliary(&record)?.1.bitwise_equal())
            } else {
                None
            };
            Ok(CheckOutcome {
                index: i,
                name: scenario.name,
                status: record.status,
                consistency_violations: record.consistency.violations.len(),
                checked_inputs: record.consistency.checked_inputs,
                bound_satisfied: record.bound.as_ref().map(|b| b.satisfied),
                v_observed: record.bound.as_ref().map(|b| b.v_observed),
                v_bound: record.bound.as_ref().map(|b| b.v_bound),
                equivalent,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckSummary {
        consistency_violations: outcomes.iter().map(|o| o.consistency_violations).sum(),
        bound_failures: outcomes.iter().filter(|o| o.bound_satisfied != Some(true)).count(),
        equivalence_failures: outcomes.iter().filter(|o| o.equivalent == Some(false)).count(),
        replayed: outcomes.iter().filter(|o| o.equivalent.is_some()).count(),
        not_ok: outcomes.iter().filter(|o| o.status != RunStatus::Ok).count(),
        outcomes,
        elapsed: started.elapsed(),
    })
}
