//! The controller side of the compensation scheme.
//!
//! At each computation time `n_c` the controller takes the newest measurement
//! `x(n_s)`, predicts the state at `n = n_c + τ_max` with the predictor map driven by
//! the inputs it knows the actuator will apply, generates `m` inputs from that
//! prediction and sends them stamped with `n`.
//!
//! The [`PredictionLedger`] holds the planned input `ũ(k)` and the prediction
//! `x̃_cl(k)` in force for every time `k`. Sending a sequence extends the ledger
//! provisionally; the actuator channel acknowledges every transmission before the
//! next computation and a lost packet rolls its extension back. Since sequences
//! always arrive by their stamp, the ledger then matches what the actuator applies.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{iterate_approx_with, ControlVector, PlantModel, StateVector};
use crate::error::{Error, Result};
use crate::mpc::{project_disc, solve_ocp, MpcConfig};
use crate::transport::{resolve_latest, ControlSequencePacket, MeasurementPacket, SendOutcome, SwitchEvent};

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionLedger {
    utilde: BTreeMap<usize, ControlVector>,
    xtilde_cl: BTreeMap<usize, StateVector>,
    startup_input: ControlVector,
    covered_from: Option<usize>,
}

/// Entries displaced by one ledger extension, kept so the extension can be undone.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerExtension {
    stamp: usize,
    len: usize,
    first_extension: bool,
    displaced_inputs: Vec<(usize, ControlVector)>,
    displaced_states: Vec<(usize, StateVector)>,
}

impl PredictionLedger {
    pub fn new(startup_input: ControlVector) -> Self {
        Self {
            utilde: BTreeMap::new(),
            xtilde_cl: BTreeMap::new(),
            startup_input,
            covered_from: None,
        }
    }

    pub fn utilde(&self) -> &BTreeMap<usize, ControlVector> {
        &self.utilde
    }

    pub fn xtilde_cl(&self) -> &BTreeMap<usize, StateVector> {
        &self.xtilde_cl
    }

    /// `ũ(k)`: the startup input before the first sequence, then the ledger entry.
    pub fn planned_input(&self, k: usize) -> Result<ControlVector> {
        if let Some(u) = self.utilde.get(&k) {
            return Ok(u.clone());
        }
        match self.covered_from {
            None => Ok(self.startup_input.clone()),
            Some(first) if k < first => Ok(self.startup_input.clone()),
            Some(_) => Err(Error::ConsistencyHole { time: k }),
        }
    }

    pub fn prediction(&self, k: usize) -> Option<&StateVector> {
        self.xtilde_cl.get(&k)
    }

    /// Records a sequence stamped `stamp`: `ũ(stamp + q) = controls[q]` and
    /// `x̃_cl(stamp + q) = states[q]`, overwriting what older sequences planned there.
    pub fn extend(
        &mut self,
        stamp: usize,
        controls: &[ControlVector],
        states: &[StateVector],
    ) -> LedgerExtension {
        debug_assert_eq!(controls.len(), states.len());
        let first_extension = self.covered_from.is_none();
        if first_extension {
            for k in 0..stamp {
                self.utilde.insert(k, self.startup_input.clone());
            }
            self.covered_from = Some(stamp);
        }
        let mut ext = LedgerExtension {
            stamp,
            len: controls.len(),
            first_extension,
            displaced_inputs: Vec::new(),
            displaced_states: Vec::new(),
        };
        for (q, (u, x)) in controls.iter().zip(states).enumerate() {
            if let Some(old) = self.utilde.insert(stamp + q, u.clone()) {
                ext.displaced_inputs.push((stamp + q, old));
            }
            if let Some(old) = self.xtilde_cl.insert(stamp + q, x.clone()) {
                ext.displaced_states.push((stamp + q, old));
            }
        }
        ext
    }

    /// Undoes `ext`. Must be applied before any later extension.
    pub fn rollback(&mut self, ext: LedgerExtension) {
        for k in ext.stamp..ext.stamp + ext.len {
            self.utilde.remove(&k);
            self.xtilde_cl.remove(&k);
        }
        self.utilde.extend(ext.displaced_inputs);
        self.xtilde_cl.extend(ext.displaced_states);
        if ext.first_extension {
            self.utilde.clear();
            self.covered_from = None;
        }
    }

    /// Overwrites a single planned input. Only meant for fault injection.
    pub fn overwrite_input(&mut self, k: usize, u: ControlVector) {
        self.utilde.insert(k, u);
    }
}

/// Static state feedback `u = −G x`, optionally saturated onto a disc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLaw {
    /// Rows of `G`; one row per input.
    pub gain: Vec<Vec<f64>>,
    #[serde(default)]
    pub saturation: Option<f64>,
}

impl FeedbackLaw {
    pub fn zero(inputs: usize, states: usize) -> Self {
        Self {
            gain: vec![vec![0.0; states]; inputs],
            saturation: None,
        }
    }

    /// PD law on each double-integrator axis: `u_i = −kp·pos_i − kd·vel_i`.
    pub fn double_integrator_pd(kp: f64, kd: f64, saturation: Option<f64>) -> Self {
        Self {
            gain: vec![vec![kp, kd, 0.0, 0.0], vec![0.0, 0.0, kp, kd]],
            saturation,
        }
    }

    pub fn gain_matrix(&self) -> Result<DMatrix<f64>> {
        let rows = self.gain.len();
        let cols = self.gain.first().map_or(0, Vec::len);
        if self.gain.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("feedback gain rows differ in length".into()));
        }
        Ok(DMatrix::from_fn(rows, cols, |i, j| self.gain[i][j]))
    }

    pub fn apply(&self, gain: &DMatrix<f64>, x: &StateVector) -> ControlVector {
        let u = -(gain * x);
        match self.saturation {
            Some(r) => project_disc(&u, r),
            None => u,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    StaticFeedback(FeedbackLaw),
    Mpc(MpcConfig),
}

impl GeneratorSpec {
    /// Largest input norm the generator can emit, if it is bounded.
    pub fn input_bound(&self) -> Option<f64> {
        match self {
            GeneratorSpec::StaticFeedback(law) => law.saturation,
            GeneratorSpec::Mpc(cfg) => Some(cfg.input_radius),
        }
    }
}

/// Per-solve diagnostics for MPC-generated sequences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    pub cost: f64,
    pub constraint_violation: f64,
}

/// `m` inputs `μ(x̃(n), q)` and the predictions `x̃(n + q)` they were computed along.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSequence {
    pub controls: Vec<ControlVector>,
    pub states: Vec<StateVector>,
    /// Full optimizer output, kept for the next warm start.
    pub full_controls: Vec<ControlVector>,
    pub stats: Option<SolveStats>,
}

/// Produces the `m`-step input sequence from a predicted state.
#[derive(Clone, Debug)]
pub struct InputGenerator {
    spec: GeneratorSpec,
    m: usize,
    gain: Option<DMatrix<f64>>,
}

impl InputGenerator {
    pub fn new(spec: GeneratorSpec, m: usize, model: &PlantModel) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("buffer length must exceed 1, got {m}")));
        }
        let gain = match &spec {
            GeneratorSpec::StaticFeedback(law) => {
                let g = law.gain_matrix()?;
                if g.nrows() != model.input_dim() || g.ncols() != model.state_dim() {
                    return Err(Error::Config(format!(
                        "feedback gain is {}x{}, plant needs {}x{}",
                        g.nrows(),
                        g.ncols(),
                        model.input_dim(),
                        model.state_dim()
                    )));
                }
                Some(g)
            }
            GeneratorSpec::Mpc(cfg) => {
                cfg.validate(model)?;
                if cfg.horizon < m {
                    return Err(Error::Config(format!(
                        "mpc horizon {} shorter than buffer length {m}",
                        cfg.horizon
                    )));
                }
                None
            }
        };
        Ok(Self { spec, m, gain })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn buffer_length(&self) -> usize {
        self.m
    }

    /// Generates the sequence from `xtilde`. `warm_start` only matters for MPC.
    pub fn generate(
        &self,
        model: &PlantModel,
        xtilde: &StateVector,
        warm_start: Option<&[ControlVector]>,
    ) -> Result<GeneratedSequence> {
        model.check_state(xtilde)?;
        match &self.spec {
            GeneratorSpec::StaticFeedback(law) => {
                let gain = self.gain.as_ref().expect("gain built with the generator");
                let mut states = Vec::with_capacity(self.m);
                let mut controls = Vec::with_capacity(self.m);
                let mut x = xtilde.clone();
                for _ in 0..self.m {
                    let u = law.apply(gain, &x);
                    let next = model.approx_step(&x, &u);
                    states.push(std::mem::replace(&mut x, next));
                    controls.push(u);
                }
                Ok(GeneratedSequence {
                    full_controls: controls.clone(),
                    controls,
                    states,
                    stats: None,
                })
            }
            GeneratorSpec::Mpc(cfg) => {
                let sol = solve_ocp(cfg, model, xtilde, warm_start)?;
                if !sol.objective.is_finite() || sol.controls.iter().any(|u| !u.iter().all(|v| v.is_finite())) {
                    return Err(Error::Generation {
                        time: 0,
                        reason: "optimizer produced non-finite values".into(),
                    });
                }
                Ok(GeneratedSequence {
                    controls: sol.controls[..self.m].to_vec(),
                    states: sol.predicted_states[..self.m].to_vec(),
                    stats: Some(SolveStats {
                        iterations: sol.iterations,
                        converged: sol.converged,
                        cost: sol.cost,
                        constraint_violation: sol.constraint_violation,
                    }),
                    full_controls: sol.controls,
                })
            }
        }
    }
}

/// Free-function form of [`InputGenerator::generate`] without a warm start.
pub fn generate_sequence(gen: &InputGenerator, xtilde: &StateVector, model: &PlantModel) -> Result<Vec<ControlVector>> {
    Ok(gen.generate(model, xtilde, None)?.controls)
}

/// `x̃(target_n, n_s, x(n_s), ũ)`: the measurement pushed forward with the ledger's inputs.
pub fn predict_state(
    ledger: &PredictionLedger,
    model: &PlantModel,
    meas: &MeasurementPacket,
    target_n: usize,
) -> Result<StateVector> {
    if target_n < meas.stamp_ns {
        return Err(Error::Config(format!(
            "prediction target {target_n} precedes measurement stamp {}",
            meas.stamp_ns
        )));
    }
    let traj = iterate_approx_with(model, meas.stamp_ns, &meas.state, target_n, |k| {
        ledger.planned_input(k)
    })?;
    Ok(traj.last_state().clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensatorConfig {
    /// Upper bound on actuation plus computation delay.
    pub tau_max: usize,
    /// Buffer length `m`.
    pub m: usize,
    pub generator: GeneratorSpec,
}

/// Everything the controller knows about one sequence it sent.
#[derive(Clone, Debug, PartialEq)]
pub struct SentSequence {
    pub computed_at: usize,
    pub stamp: usize,
    pub measurement_stamp: usize,
    pub predicted_state: StateVector,
    pub controls: Vec<ControlVector>,
    pub warm_start: Option<Vec<ControlVector>>,
    pub stats: Option<SolveStats>,
    /// `None` until the actuator channel reports the outcome.
    pub delivered: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct Controller {
    tau_max: usize,
    model: PlantModel,
    generator: InputGenerator,
    ledger: PredictionLedger,
    newest: Option<MeasurementPacket>,
    sent: BTreeMap<usize, SentSequence>,
    pending: Option<LedgerExtension>,
    last_solution: Option<(usize, Vec<ControlVector>)>,
}

impl Controller {
    pub fn new(config: &CompensatorConfig, model: PlantModel, startup_input: ControlVector) -> Result<Self> {
        model.check_input(&startup_input)?;
        let generator = InputGenerator::new(config.generator.clone(), config.m, &model)?;
        Ok(Self {
            tau_max: config.tau_max,
            model,
            generator,
            ledger: PredictionLedger::new(startup_input),
            newest: None,
            sent: BTreeMap::new(),
            pending: None,
            last_solution: None,
        })
    }

    pub fn ledger(&self) -> &PredictionLedger {
        &self.ledger
    }

    pub fn generator(&self) -> &InputGenerator {
        &self.generator
    }

    pub fn sent(&self) -> &BTreeMap<usize, SentSequence> {
        &self.sent
    }

    pub fn newest_measurement(&self) -> Option<&MeasurementPacket> {
        self.newest.as_ref()
    }

    pub fn into_parts(self) -> (PredictionLedger, BTreeMap<usize, SentSequence>) {
        (self.ledger, self.sent)
    }

    /// One computation at time `now`. Returns `None` while no measurement has arrived.
    pub fn step(&mut self, now: usize, inbox: Vec<MeasurementPacket>) -> Result<Option<ControlSequencePacket>> {
        if self.pending.is_some() {
            return Err(Error::Config(
                "previous sequence not acknowledged before the next computation".into(),
            ));
        }
        if !inbox.is_empty() {
            let latest = resolve_latest(self.newest.iter().chain(inbox.iter()))?.clone();
            self.newest = Some(latest);
        }
        let Some(meas) = self.newest.clone() else {
            return Ok(None);
        };
        let stamp = now + self.tau_max;
        let xtilde = predict_state(&self.ledger, &self.model, &meas, stamp)?;
        let warm_start = self.warm_start(stamp);
        let generated = self
            .generator
            .generate(&self.model, &xtilde, warm_start.as_deref())
            .map_err(|e| match e {
                Error::Generation { reason, .. } => Error::Generation { time: now, reason },
                Error::Singularity { radius } => Error::Generation {
                    time: now,
                    reason: format!("stage cost singular at radius {radius:e}"),
                },
                other => other,
            })?;
        let ext = self.ledger.extend(stamp, &generated.controls, &generated.states);
        self.pending = Some(ext);
        if matches!(self.generator.spec(), GeneratorSpec::Mpc(_)) {
            self.last_solution = Some((stamp, generated.full_controls.clone()));
        }
        self.sent.insert(
            stamp,
            SentSequence {
                computed_at: now,
                stamp,
                measurement_stamp: meas.stamp_ns,
                predicted_state: xtilde,
                controls: generated.controls.clone(),
                warm_start,
                stats: generated.stats,
                delivered: None,
            },
        );
        Ok(Some(ControlSequencePacket {
            stamp_n: stamp,
            measurement_stamp: meas.stamp_ns,
            sequence: generated.controls,
        }))
    }

    /// Previous optimizer output shifted to start at `stamp`, padded with its last entry.
    fn warm_start(&self, stamp: usize) -> Option<Vec<ControlVector>> {
        let (prev_stamp, controls) = self.last_solution.as_ref()?;
        let shift = stamp.checked_sub(*prev_stamp)?;
        let last = controls.last()?.clone();
        Some(
            (0..controls.len())
                .map(|q| controls.get(q + shift).cloned().unwrap_or_else(|| last.clone()))
                .collect(),
        )
    }

    /// Delivery report for the sequence stamped `stamp`; a loss rolls back its
    /// ledger extension.
    pub fn acknowledge(&mut self, stamp: usize, outcome: SendOutcome) -> Result<()> {
        let ext = self
            .pending
            .take()
            .ok_or_else(|| Error::Config(format!("no pending sequence to acknowledge (stamp {stamp})")))?;
        if ext.stamp != stamp {
            return Err(Error::Config(format!(
                "acknowledgement for stamp {stamp} while {} is pending",
                ext.stamp
            )));
        }
        let delivered = matches!(outcome, SendOutcome::Delivered { .. });
        if let Some(s) = self.sent.get_mut(&stamp) {
            s.delivered = Some(delivered);
        }
        if !delivered {
            self.ledger.rollback(ext);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `ũ(k) ≠ u(k)`.
    InputMismatch,
    /// No planned input recorded for an applied time.
    MissingInput,
    /// Applied input differs from element `n − σ_i` of the active sequence.
    SequenceMismatch,
    /// Active sequence switched in at a time other than its stamp.
    SwitchOffStamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub time: usize,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Default)]
pub struct ConsistencyReport {
    pub checked_inputs: usize,
    pub checked_switch_inputs: usize,
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<usize> {
        self.violations.iter().map(|v| v.time).min()
    }
}

fn bitwise_eq(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Audits a finished run: `ũ(k) = u(k)` bit for bit at every applied time, and
/// `u(n) = μ(x̃(σ_i), n − σ_i)` on each switching interval.
///
/// `applied[j]` is the input applied at time `start + j`; `sequences` maps stamps
/// to the sequences that were sent.
pub fn reconcile_consistency(
    ledger: &PredictionLedger,
    switches: &[SwitchEvent],
    sequences: &BTreeMap<usize, Vec<ControlVector>>,
    applied: &[ControlVector],
    start: usize,
) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    for (j, u) in applied.iter().enumerate() {
        let k = start + j;
        report.checked_inputs += 1;
        match ledger.planned_input(k) {
            Ok(planned) if bitwise_eq(&planned, u) => {}
            Ok(_) => report.violations.push(Violation {
                time: k,
                kind: ViolationKind::InputMismatch,
            }),
            Err(_) => report.violations.push(Violation {
                time: k,
                kind: ViolationKind::MissingInput,
            }),
        }
    }
    let end = start + applied.len();
    for (i, sw) in switches.iter().enumerate() {
        if sw.sigma != sw.stamp {
            report.violations.push(Violation {
                time: sw.sigma,
                kind: ViolationKind::SwitchOffStamp,
            });
        }
        let until = switches.get(i + 1).map_or(end, |next| next.sigma).min(end);
        let seq = sequences.get(&sw.stamp);
        for n in sw.sigma.max(start)..until {
            report.checked_switch_inputs += 1;
            let expected = seq.and_then(|s| s.get(n - sw.sigma));
            let ok = expected.is_some_and(|e| bitwise_eq(e, &applied[n - start]));
            if !ok {
                report.violations.push(Violation {
                    time: n,
                    kind: ViolationKind::SequenceMismatch,
                });
            }
        }
    }
    report.violations.sort_by_key(|v| v.time);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ContinuousLti, Predictor};
    use crate::transport::{ActuatorBuffer, Channel, ChannelModel};

    fn scalar_integrator() -> PlantModel {
        // f̃(x, u) = x + u is the Euler map of ẋ = u with h = 1
        let lti = ContinuousLti::new(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)).unwrap();
        PlantModel::new(lti, 1.0, Predictor::Euler).unwrap()
    }

    fn s(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn static_feedback_sequence_follows_the_prediction() {
        let model = scalar_integrator();
        let law = FeedbackLaw {
            gain: vec![vec![1.0]],
            saturation: None,
        };
        let gen = InputGenerator::new(GeneratorSpec::StaticFeedback(law), 3, &model).unwrap();
        let seq = generate_sequence(&gen, &s(1.0), &model).unwrap();
        assert_eq!(seq, vec![s(-1.0), s(0.0), s(0.0)]);
    }

    #[test]
    fn zero_gain_on_the_integrator_chain() {
        let model = PlantModel::double_integrator_pair(0.1, Predictor::Exact).unwrap();
        let gen = InputGenerator::new(GeneratorSpec::StaticFeedback(FeedbackLaw::zero(2, 4)), 4, &model).unwrap();
        let seq = generate_sequence(&gen, &DVector::zeros(4), &model).unwrap();
        assert_eq!(seq.len(), 4);
        assert!(seq.iter().all(|u| u.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn zero_length_prediction_returns_the_measurement() {
        let model = scalar_integrator();
        let ledger = PredictionLedger::new(s(0.0));
        let meas = MeasurementPacket {
            stamp_ns: 4,
            state: s(2.5),
        };
        assert_eq!(predict_state(&ledger, &model, &meas, 4).unwrap(), s(2.5));
    }

    #[test]
    fn prediction_uses_planned_inputs_and_flags_holes() {
        let model = scalar_integrator();
        let mut ledger = PredictionLedger::new(s(0.0));
        ledger.extend(2, &[s(1.0), s(2.0)], &[s(0.0), s(0.0)]);
        let meas = MeasurementPacket {
            stamp_ns: 0,
            state: s(0.0),
        };
        // startup inputs at 0 and 1, then 1 and 2
        assert_eq!(predict_state(&ledger, &model, &meas, 4).unwrap(), s(3.0));
        assert!(matches!(
            predict_state(&ledger, &model, &meas, 5),
            Err(Error::ConsistencyHole { time: 4 })
        ));
    }

    #[test]
    fn rollback_restores_the_older_plan() {
        let mut ledger = PredictionLedger::new(s(0.0));
        ledger.extend(3, &[s(1.0), s(1.0), s(1.0)], &[s(0.0), s(0.0), s(0.0)]);
        let before = ledger.clone();
        let ext = ledger.extend(4, &[s(5.0), s(5.0), s(5.0)], &[s(9.0), s(9.0), s(9.0)]);
        assert_eq!(ledger.planned_input(4).unwrap(), s(5.0));
        ledger.rollback(ext);
        assert_eq!(ledger, before);

        let mut fresh = PredictionLedger::new(s(0.0));
        let ext = fresh.extend(3, &[s(1.0), s(1.0)], &[s(0.0), s(0.0)]);
        fresh.rollback(ext);
        assert_eq!(fresh, PredictionLedger::new(s(0.0)));
    }

    fn pd_config(tau_max: usize) -> CompensatorConfig {
        CompensatorConfig {
            tau_max,
            m: 5,
            generator: GeneratorSpec::StaticFeedback(FeedbackLaw::double_integrator_pd(4.0, 3.0, Some(10.0))),
        }
    }

    fn meas4(stamp: usize) -> MeasurementPacket {
        MeasurementPacket {
            stamp_ns: stamp,
            state: DVector::from_vec(vec![1.0, 0.0, -1.0, 0.5]),
        }
    }

    #[test]
    fn stamp_is_computation_time_plus_tau_max() {
        let model = PlantModel::double_integrator_pair(0.1, Predictor::Exact).unwrap();
        let mut c = Controller::new(&pd_config(3), model, DVector::zeros(2)).unwrap();
        assert_eq!(c.step(5, vec![]).unwrap(), None);
        c.step(8, vec![meas4(8)]).unwrap();
        c.acknowledge(11, SendOutcome::Delivered { at: 9 }).unwrap();
        c.step(9, vec![]).unwrap();
        c.acknowledge(12, SendOutcome::Delivered { at: 10 }).unwrap();
        let pkt = c.step(10, vec![]).unwrap().unwrap();
        assert_eq!(pkt.stamp_n, 13);
        assert_eq!(pkt.tau(), 5);
    }

    #[test]
    fn zero_delay_degenerates_to_plain_feedback() {
        let model = PlantModel::double_integrator_pair(0.1, Predictor::Exact).unwrap();
        let cfg = pd_config(0);
        let mut c = Controller::new(&cfg, model, DVector::zeros(2)).unwrap();
        let pkt = c.step(7, vec![meas4(7)]).unwrap().unwrap();
        assert_eq!(pkt.stamp_n, 7);
        let GeneratorSpec::StaticFeedback(law) = &cfg.generator else { unreachable!() };
        let u = law.apply(&law.gain_matrix().unwrap(), &meas4(7).state);
        assert_eq!(pkt.sequence[0], u);
    }

    #[test]
    fn unacknowledged_sequence_blocks_the_next_computation() {
        let model = PlantModel::double_integrator_pair(0.1, Predictor::Exact).unwrap();
        let mut c = Controller::new(&pd_config(1), model, DVector::zeros(2)).unwrap();
        c.step(0, vec![meas4(0)]).unwrap();
        assert!(c.step(1, vec![]).is_err());
    }

    #[test]
    fn lossless_loop_is_consistent_and_corruption_is_caught() {
        let model = PlantModel::double_integrator_pair(0.1, Predictor::Exact).unwrap();
        let mut c = Controller::new(&pd_config(2), model.clone(), DVector::zeros(2)).unwrap();
        let mut buf = ActuatorBuffer::new(5).unwrap().with_startup_input(DVector::zeros(2));
        let mut act: Channel<ControlSequencePacket> = Channel::new(ChannelModel::ideal(), 0);
        let mut x = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.5]);
        let mut applied = Vec::new();
        for n in 0..40 {
            if let Some(p) = c.step(n, vec![MeasurementPacket { stamp_ns: n, state: x.clone() }]).unwrap() {
                let stamp = p.stamp_n;
                let outcome = act.send(p, n);
                c.acknowledge(stamp, outcome).unwrap();
            }
            for p in act.deliver(n) {
                buf.insert(p, n);
            }
            let u = buf.read(n).unwrap().input().clone();
            x = model.approx_step(&x, &u);
            applied.push(u);
        }
        let seqs: BTreeMap<_, _> = c.sent().iter().map(|(k, s)| (*k, s.controls.clone())).collect();
        let report = reconcile_consistency(c.ledger(), buf.switch_log(), &seqs, &applied, 0);
        assert!(report.is_consistent(), "{report:?}");
        assert_eq!(report.checked_inputs, 40);

        let mut ledger = c.ledger().clone();
        ledger.overwrite_input(17, DVector::from_vec(vec![1e-3, 0.0]));
        let report = reconcile_consistency(&ledger, buf.switch_log(), &seqs, &applied, 0);
        assert_eq!(report.first_violation(), Some(17));
        assert_eq!(report.violations.len(), 1);
    }
}
