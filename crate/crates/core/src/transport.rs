//! Sensor→controller and controller→actuator channels, the actuator's sequence
//! buffer, and the switching-time / delay bookkeeping derived from it.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlVector, StateVector};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementPacket {
    /// Sensor time `n_s` at which the state was sampled.
    pub stamp_ns: usize,
    pub state: StateVector,
}

/// A control sequence stamped with the time its first element is meant to be applied.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSequencePacket {
    pub stamp_n: usize,
    /// Stamp of the measurement the prediction started from.
    pub measurement_stamp: usize,
    pub sequence: Vec<ControlVector>,
}

impl ControlSequencePacket {
    /// Prediction interval `τ(n) = n − n_s` of this packet.
    pub fn tau(&self) -> usize {
        self.stamp_n - self.measurement_stamp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayModel {
    Constant { delay: usize },
    /// Uniform on `min..=max`.
    Uniform { min: usize, max: usize },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Constant { delay: 0 }
    }
}

impl DelayModel {
    pub fn bound(&self) -> usize {
        match *self {
            DelayModel::Constant { delay } => delay,
            DelayModel::Uniform { max, .. } => max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    #[default]
    None,
    /// Each transmission is lost independently with probability `p`.
    Bernoulli { p: f64 },
    /// Only transmissions with `send_time % period == phase` get through.
    Periodic { period: usize, phase: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct ChannelModel {
    #[serde(default)]
    pub delay: DelayModel,
    #[serde(default)]
    pub loss: LossModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendOutcome {
    Delivered { at: usize },
    Lost,
}

impl ChannelModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn delay_bound(&self) -> usize {
        self.delay.bound()
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if let DelayModel::Uniform { min, max } = self.delay {
            if min > max {
                return Err(Error::Config(format!("{name}: delay min {min} exceeds max {max}")));
            }
        }
        match self.loss {
            LossModel::Bernoulli { p } if !(0.0..1.0).contains(&p) => Err(Error::Config(format!(
                "{name}: loss probability must lie in [0, 1), got {p}"
            ))),
            LossModel::Periodic { period, phase } if period == 0 || phase >= period => {
                Err(Error::Config(format!(
                    "{name}: periodic loss needs phase < period, got {phase}/{period}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Decides the fate of one transmission. Draws from `rng` in a fixed order
    /// (loss first, then delay) so runs replay exactly.
    pub fn send<R: Rng + ?Sized>(&self, send_time: usize, rng: &mut R) -> SendOutcome {
        let lost = match self.loss {
            LossModel::None => false,
            LossModel::Bernoulli { p } => rng.random::<f64>() < p,
            LossModel::Periodic { period, phase } => send_time % period != phase,
        };
        if lost {
            return SendOutcome::Lost;
        }
        let delay = match self.delay {
            DelayModel::Constant { delay } => delay,
            DelayModel::Uniform { min, max } => rng.random_range(min..=max),
        };
        SendOutcome::Delivered {
            at: send_time + delay,
        }
    }
}

/// A channel instance: model, its own RNG stream, and the packets in flight.
#[derive(Clone, Debug)]
pub struct Channel<P> {
    model: ChannelModel,
    rng: ChaCha8Rng,
    seq: u64,
    in_flight: BinaryHeap<Reverse<(usize, u64)>>,
    payloads: BTreeMap<u64, P>,
}

impl<P> Channel<P> {
    pub fn new(model: ChannelModel, seed: u64) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seq: 0,
            in_flight: BinaryHeap::new(),
            payloads: BTreeMap::new(),
        }
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn send(&mut self, packet: P, send_time: usize) -> SendOutcome {
        let outcome = self.model.send(send_time, &mut self.rng);
        if let SendOutcome::Delivered { at } = outcome {
            debug_assert!(at - send_time <= self.model.delay_bound());
            let id = self.seq;
            self.seq += 1;
            self.in_flight.push(Reverse((at, id)));
            self.payloads.insert(id, packet);
        }
        outcome
    }

    /// Removes and returns every packet due at or before `now`, ordered by
    /// delivery time and then by send order.
    pub fn deliver(&mut self, now: usize) -> Vec<P> {
        let mut out = Vec::new();
        while let Some(Reverse((at, id))) = self.in_flight.peek().copied() {
            if at > now {
                break;
            }
            self.in_flight.pop();
            if let Some(p) = self.payloads.remove(&id) {
                out.push(p);
            }
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.in_flight.len()
    }
}

/// Picks the measurement with the newest stamp.
pub fn resolve_latest<'a, I>(packets: I) -> Result<&'a MeasurementPacket>
where
    I: IntoIterator<Item = &'a MeasurementPacket>,
{
    packets
        .into_iter()
        .max_by_key(|p| p.stamp_ns)
        .ok_or(Error::NoMeasurement)
}

/// One actuator switch: at time `sigma` it began applying the packet stamped `stamp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SwitchEvent {
    pub sigma: usize,
    pub stamp: usize,
    /// `τ(σ_i) = σ_i − n_s` for the measurement behind the sequence.
    pub tau: usize,
}

/// Where an applied input came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Applied {
    /// Startup input, before any sequence activated.
    Startup(ControlVector),
    Sequence {
        stamp: usize,
        index: usize,
        input: ControlVector,
    },
}

impl Applied {
    pub fn input(&self) -> &ControlVector {
        match self {
            Applied::Startup(u) => u,
            Applied::Sequence { input, .. } => input,
        }
    }
}

/// Actuator-side store of received sequences. The active sequence at time `n`
/// is the stored one with the largest stamp not after `n`.
#[derive(Clone, Debug)]
pub struct ActuatorBuffer {
    m: usize,
    stored: BTreeMap<usize, ControlSequencePacket>,
    active: Option<usize>,
    switch_log: Vec<SwitchEvent>,
    startup_input: Option<ControlVector>,
}

impl ActuatorBuffer {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("buffer length must exceed 1, got {m}")));
        }
        Ok(Self {
            m,
            stored: BTreeMap::new(),
            active: None,
            switch_log: Vec::new(),
            startup_input: None,
        })
    }

    /// Input applied before the first sequence activates.
    pub fn with_startup_input(mut self, u: ControlVector) -> Self {
        self.startup_input = Some(u);
        self
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    pub fn active_stamp(&self) -> Option<usize> {
        self.active
    }

    pub fn switch_log(&self) -> &[SwitchEvent] {
        &self.switch_log
    }

    pub fn stored_stamps(&self) -> impl Iterator<Item = usize> + '_ {
        self.stored.keys().copied()
    }

    pub fn insert(&mut self, packet: ControlSequencePacket, _now: usize) {
        self.stored.entry(packet.stamp_n).or_insert(packet);
    }

    /// Activates the newest eligible sequence at `now`, logging a switch if it changed.
    fn activate(&mut self, now: usize) {
        let candidate = self.stored.range(..=now).next_back().map(|(s, _)| *s);
        if let Some(stamp) = candidate {
            if self.active.is_none_or(|a| stamp > a) {
                self.active = Some(stamp);
                let tau = self.stored[&stamp].tau();
                if let Some(last) = self.switch_log.last() {
                    debug_assert!(now > last.sigma);
                }
                self.switch_log.push(SwitchEvent {
                    sigma: now,
                    stamp,
                    tau,
                });
                // older sequences can never become active again
                self.stored = self.stored.split_off(&stamp);
            }
        }
    }

    /// The input to apply at `now`: element `now − stamp` of the active sequence.
    pub fn read(&mut self, now: usize) -> Result<Applied> {
        self.activate(now);
        match self.active {
            None => self
                .startup_input
                .clone()
                .map(Applied::Startup)
                .ok_or(Error::Starvation {
                    time: now,
                    active_stamp: None,
                }),
            Some(stamp) => {
                let index = now - stamp;
                let packet = &self.stored[&stamp];
                if index >= self.m || index >= packet.sequence.len() {
                    return Err(Error::Starvation {
                        time: now,
                        active_stamp: Some(stamp),
                    });
                }
                Ok(Applied::Sequence {
                    stamp,
                    index,
                    input: packet.sequence[index].clone(),
                })
            }
        }
    }
}

/// Worst-case prediction interval and switching gap over a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DelayRecord {
    pub tau_of_sigma: BTreeMap<usize, usize>,
    pub tau_inf: usize,
    pub delta_sigma_inf: usize,
}

impl DelayRecord {
    /// `horizon_end` closes the last interval: the final sequence is in use until then.
    pub fn from_switches(switches: &[SwitchEvent], horizon_end: Option<usize>) -> Self {
        let tau_of_sigma: BTreeMap<usize, usize> =
            switches.iter().map(|s| (s.sigma, s.tau)).collect();
        let tau_inf = tau_of_sigma.values().copied().max().unwrap_or(0);
        let mut delta_sigma_inf = switches
            .windows(2)
            .map(|w| w[1].sigma - w[0].sigma)
            .max()
            .unwrap_or(0);
        if let (Some(last), Some(end)) = (switches.last(), horizon_end) {
            delta_sigma_inf = delta_sigma_inf.max(end.saturating_sub(last.sigma));
        }
        Self {
            tau_of_sigma,
            tau_inf,
            delta_sigma_inf,
        }
    }
}
