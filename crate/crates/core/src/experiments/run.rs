//! The closed-loop simulation.
//!
//! One step at time `n` runs in a fixed order:
//!
//! 1. the sensor samples `x(n)` and sends it;
//! 2. sensor packets due at `n` reach the controller;
//! 3. the controller computes (once it has any measurement), sends the sequence
//!    stamped `n + τ_max` and learns whether it will arrive;
//! 4. actuator packets due at `n` enter the buffer and the buffer picks `u(n)`;
//! 5. the plant steps: `x(n+1) = f(x(n), u(n)) + w(n)`.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scenario::Scenario;
use crate::bounds::{auxiliary_replay, check_theorem_bound, extract_v, BoundParams, ErrorBoundModel, RobustnessBoundReport, VSequence};
use crate::compensation::{
    reconcile_consistency, ConsistencyReport, Controller, InputGenerator, PredictionLedger, SentSequence,
};
use crate::derive_seed;
use crate::dynamics::{ensure_finite, sample_disturbance, ControlVector, DisturbanceVector, PlantModel, StateVector, Trajectory};
use crate::error::{Error, Result};
use crate::transport::{ActuatorBuffer, Channel, ControlSequencePacket, DelayRecord, MeasurementPacket, SwitchEvent};

const DISTURBANCE_STREAM: u64 = 0;
const SENSOR_STREAM: u64 = 1;
const ACTUATOR_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Starvation,
    SolverFailure,
    NumericalBlowup,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Starvation => "starvation",
            RunStatus::SolverFailure => "solver-failure",
            RunStatus::NumericalBlowup => "numerical-blowup",
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Aggregate optimizer statistics over a run (all zero for static feedback).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SolverSummary {
    pub solves: usize,
    pub not_converged: usize,
    pub max_iterations: usize,
    pub max_constraint_violation: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub status: RunStatus,
    pub failure: Option<String>,
    /// `x(0..=N)` and `u(0..N)`, where `N` is `steps` unless the run failed.
    pub trajectory: Trajectory,
    /// The full pre-sampled disturbance realization `w(0..steps)`.
    pub disturbances: Vec<DisturbanceVector>,
    pub disturbance_digest: u64,
    /// Stamp of the sequence active at each applied step.
    pub active_stamps: Vec<Option<usize>>,
    pub switches: Vec<SwitchEvent>,
    pub delays: DelayRecord,
    pub ledger: PredictionLedger,
    pub sent: BTreeMap<usize, SentSequence>,
    pub consistency: ConsistencyReport,
    pub v: VSequence,
    /// `sup_n ‖w(n)‖₂` over the applied steps.
    pub w_sup: f64,
    pub bound_params: BoundParams,
    /// Present iff `status` is ok.
    pub bound: Option<RobustnessBoundReport>,
    pub deviation: Vec<f64>,
    pub max_deviation: f64,
    pub solver: SolverSummary,
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// Number of plant steps actually simulated.
    pub fn simulated_steps(&self) -> usize {
        self.trajectory.inputs.len()
    }

    /// Ok, consistent and within the robustness bound.
    pub fn passed(&self) -> bool {
        self.is_ok() && self.consistency.is_consistent() && self.bound.as_ref().is_some_and(|b| b.satisfied)
    }
}

/// Hash of the exact bit patterns of a disturbance realization.
pub fn disturbance_digest(w: &[DisturbanceVector]) -> u64 {
    let mut h = DefaultHasher::new();
    for wn in w {
        for v in wn.entries.iter() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// The disturbance realization a scenario will see.
pub fn sample_disturbances(scenario: &Scenario, dim: usize) -> Vec<DisturbanceVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, DISTURBANCE_STREAM));
    (0..scenario.steps)
        .map(|_| sample_disturbance(&mut rng, scenario.disturbance_bound, dim))
        .collect()
}

struct LoopState {
    trajectory: Trajectory,
    active_stamps: Vec<Option<usize>>,
    controller: Controller,
    buffer: ActuatorBuffer,
}

fn simulate(scenario: &Scenario, model: &PlantModel, w: &[DisturbanceVector], state: &mut LoopState) -> Result<()> {
    let mut sensor: Channel<MeasurementPacket> =
        Channel::new(scenario.sensor_channel, derive_seed(scenario.seed, SENSOR_STREAM));
    let mut actuator: Channel<ControlSequencePacket> =
        Channel::new(scenario.actuator_channel, derive_seed(scenario.seed, ACTUATOR_STREAM));
    for n in 0..scenario.steps {
        let x = state.trajectory.last_state().clone();
        sensor.send(
            MeasurementPacket {
                stamp_ns: n,
                state: x.clone(),
            },
            n,
        );
        let inbox = sensor.deliver(n);
        if let Some(packet) = state.controller.step(n, inbox)? {
            let stamp = packet.stamp_n;
            let outcome = actuator.send(packet, n);
            state.controller.acknowledge(stamp, outcome)?;
        }
        for packet in actuator.deliver(n) {
            if n > packet.stamp_n {
                return Err(Error::LateDelivery {
                    stamp: packet.stamp_n,
                    delivered: n,
                });
            }
            state.buffer.insert(packet, n);
        }
        let u = state.buffer.read(n)?.input().clone();
        state.active_stamps.push(state.buffer.active_stamp());
        let next = model.exact_step(&x, &u, &w[n]);
        ensure_finite(&next, n + 1)?;
        state.trajectory.push(u, next);
    }
    Ok(())
}

fn classify(err: Error) -> Result<(RunStatus, String)> {
    let status = match &err {
        // a hole in the ledger means no delivered sequence covers that time,
        // so the actuator would run dry there
        Error::Starvation { .. } | Error::ConsistencyHole { .. } => RunStatus::Starvation,
        Error::Generation { .. } | Error::Singularity { .. } => RunStatus::SolverFailure,
        Error::NumericalBlowup { .. } => RunStatus::NumericalBlowup,
        _ => return Err(err),
    };
    Ok((status, err.to_string()))
}

/// Runs one scenario to completion. Loop failures (starvation, solver failure,
/// blow-up) end the run early and are reported in the status; configuration
/// errors are returned as `Err`.
pub fn run_scenario(scenario: &Scenario) -> Result<RunRecord> {
    let started = Instant::now();
    let model = scenario.validate()?;
    let bound_params = scenario.bound_params(&model)?;
    let bound_model = ErrorBoundModel::new(bound_params)?;
    let disturbances = sample_disturbances(scenario, model.state_dim());
    let startup = scenario
        .startup_input
        .as_ref()
        .map(|u| ControlVector::from_vec(u.clone()))
        .unwrap_or_else(|| ControlVector::zeros(model.input_dim()));
    let x0 = StateVector::from_vec(scenario.x0.clone());

    let mut state = LoopState {
        trajectory: Trajectory::new(0, x0),
        active_stamps: Vec::with_capacity(scenario.steps),
        controller: Controller::new(&scenario.compensator(), model.clone(), startup.clone())?,
        buffer: ActuatorBuffer::new(scenario.buffer_length)?.with_startup_input(startup),
    };
    let (status, failure) = match simulate(scenario, &model, &disturbances, &mut state) {
        Ok(()) => (RunStatus::Ok, None),
        Err(e) => {
            let (status, message) = classify(e)?;
            (status, Some(message))
        }
    };

    let LoopState {
        trajectory,
        active_stamps,
        controller,
        buffer,
    } = state;
    let end = trajectory.inputs.len();
    let switches = buffer.switch_log().to_vec();
    let delays = DelayRecord::from_switches(&switches, Some(end));
    let (ledger, sent) = controller.into_parts();
    let sequences: BTreeMap<usize, Vec<ControlVector>> =
        sent.iter().map(|(stamp, s)| (*stamp, s.controls.clone())).collect();
    let consistency = reconcile_consistency(&ledger, &switches, &sequences, &trajectory.inputs, 0);

    let w_sup = disturbances[..end].iter().map(|w| w.norm()).fold(0.0, f64::max);
    let v_start = switches.first().map_or(end, |s| s.sigma);
    let (v, bound) = if status == RunStatus::Ok {
        let v = extract_v(ledger.xtilde_cl(), &trajectory, v_start, end)?;
        let report = check_theorem_bound(&v, &delays, w_sup, &bound_model);
        (v, Some(report))
    } else {
        (VSequence::empty(v_start), None)
    };

    let deviation: Vec<f64> = trajectory.states.iter().map(|x| scenario.deviation.eval(x)).collect();
    let max_deviation = deviation.iter().copied().fold(0.0, f64::max);
    let mut solver = SolverSummary::default();
    for stats in sent.values().filter_map(|s| s.stats) {
        solver.solves += 1;
        solver.not_converged += usize::from(!stats.converged);
        solver.max_iterations = solver.max_iterations.max(stats.iterations);
        solver.max_constraint_violation = solver.max_constraint_violation.max(stats.constraint_violation);
    }

    Ok(RunRecord {
        scenario: scenario.clone(),
        status,
        failure,
        disturbance_digest: disturbance_digest(&disturbances),
        disturbances,
        trajectory,
        active_stamps,
        switches,
        delays,
        ledger,
        sent,
        consistency,
        v,
        w_sup,
        bound_params,
        bound,
        deviation,
        max_deviation,
        solver,
        wall_time: started.elapsed(),
    })
}

/// Outcome of re-simulating a run as the delay-free auxiliary loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub compared_states: usize,
    pub compared_inputs: usize,
    pub max_abs_difference: f64,
    pub first_mismatch: Option<usize>,
}

impl EquivalenceReport {
    pub fn bitwise_equal(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// Replays a finished ok run as the auxiliary loop, in which the sequence of
/// switch `i` is regenerated from `x(σ_i) + v(σ_i)` with no network at all, and
/// compares it bit for bit with the recorded closed loop from `σ_0` on.
pub fn replay_auxiliary(record: &RunRecord) -> Result<(Trajectory, EquivalenceReport)> {
    if !record.is_ok() {
        return Err(Error::Config(format!("cannot replay a run with status {}", record.status)));
    }
    let model = record.scenario.plant.build()?;
    let generator = InputGenerator::new(record.scenario.generator.clone(), record.scenario.buffer_length, &model)?;
    let end = record.simulated_steps();
    let start = record.switches.first().map_or(end, |s| s.sigma);
    let x_start = record
        .trajectory
        .state_at(start)
        .ok_or_else(|| Error::Config(format!("trajectory has no state at {start}")))?;
    let switches = &record.switches;
    let replay = auxiliary_replay(&model, x_start, &record.v, &record.disturbances, switches, end, |i, xhat| {
        let stamp = switches[i].stamp;
        let warm = record.sent.get(&stamp).and_then(|s| s.warm_start.as_deref());
        Ok(generator.generate(&model, xhat, warm)?.controls)
    })?;

    let mut report = EquivalenceReport {
        compared_states: 0,
        compared_inputs: 0,
        max_abs_difference: 0.0,
        first_mismatch: None,
    };
    for n in start..=end {
        let (Some(a), Some(b)) = (replay.state_at(n), record.trajectory.state_at(n)) else {
            report.first_mismatch.get_or_insert(n);
            continue;
        };
        report.compared_states += 1;
        if n < end {
            report.compared_inputs += 1;
            let same_input = match (replay.input_at(n), record.trajectory.input_at(n)) {
                (Some(ua), Some(ub)) => bits_equal(ua, ub),
                _ => false,
            };
            if !same_input {
                report.first_mismatch.get_or_insert(n);
            }
        }
        let diff = (a - b).amax();
        report.max_abs_difference = report.max_abs_difference.max(diff);
        if !bits_equal(a, b) {
            report.first_mismatch.get_or_insert(n);
        }
    }
    Ok((replay, report))
}

fn bits_equal(a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}
