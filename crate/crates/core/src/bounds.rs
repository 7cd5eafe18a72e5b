//! Prediction-error and disturbance-propagation bounds, the measurement-error
//! sequence `v(n) = x̃_cl(n) − x_cl(n)` of a finished run, the check
//! `‖v‖∞ ≤ ε(τ∞+Δσ∞, 0) + η(τ∞+Δσ∞, ‖w‖∞)`, and replay of the delay-free
//! auxiliary loop driven by `v`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ensure_finite, ControlVector, DisturbanceVector, PlantModel, StateVector, Trajectory};
use crate::error::{Error, Result};
use crate::transport::{DelayRecord, SwitchEvent};

/// Growth of the error terms in the number of prediction steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    /// Lipschitz worst case, valid for any plant.
    #[default]
    Exponential,
    /// Declared for open-loop stable plants: `ε = k·K·h^p + r`, `η = k·ρ(r)`.
    Linear,
}

/// Class-K gain `ρ` with `‖f(x,u,w) − f(x,u,0)‖ ≤ ρ(‖w‖)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rho {
    #[default]
    Identity,
    Linear {
        gain: f64,
    },
}

impl Rho {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Rho::Identity => r,
            Rho::Linear { gain } => gain * r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Per-step log-Lipschitz constant `L`.
    pub lipschitz: f64,
    /// Error constant `K`.
    pub k: f64,
    /// Integration step `h`.
    pub h: f64,
    /// Convergence order `p`.
    pub p: u32,
    #[serde(default)]
    pub rho: Rho,
    #[serde(default)]
    pub growth: Growth,
}

impl BoundParams {
    /// Analytic parameters for `model` when inputs stay in `‖u‖ ≤ u_max` and
    /// states in `‖x‖ ≤ x_max`: `L` is the model's declared constant and
    /// `K h^p · L` equals the one-step predictor mismatch.
    pub fn derive(model: &PlantModel, u_max: f64, x_max: f64) -> Self {
        let l = model.lipschitz_l;
        let h = model.sample_time;
        let p = model.predictor.order();
        let local = model.local_error_bound(x_max, u_max);
        let k = if local == 0.0 { 0.0 } else { local / (l * h.powi(p as i32)) };
        Self {
            lipschitz: l,
            k,
            h,
            p,
            rho: Rho::Identity,
            growth: Growth::Exponential,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lipschitz > 0.0 && self.k >= 0.0 && self.h > 0.0;
        if ok && [self.lipschitz, self.k, self.h].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid bound parameters {self:?}")))
        }
    }
}

/// `ε(k, r)` and `η(k, r)` instantiated from [`BoundParams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBoundModel {
    pub params: BoundParams,
}

impl ErrorBoundModel {
    pub fn new(params: BoundParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    fn discretization_error(&self) -> f64 {
        self.params.k * self.params.h.powi(self.params.p as i32)
    }

    /// Bound on the nominal k-step prediction error from an initial offset `r`.
    pub fn epsilon(&self, k: usize, r: f64) -> f64 {
        let kf = k as f64;
        match self.params.growth {
            Growth::Exponential => {
                let lk = self.params.lipschitz * kf;
                lk.exp_m1() * self.discretization_error() + lk.exp() * r
            }
            Growth::Linear => kf * self.discretization_error() + r,
        }
    }

    /// Bound on the k-step deviation caused by disturbances of size `r`.
    pub fn eta(&self, k: usize, r: f64) -> f64 {
        let kf = k as f64;
        let rho = self.params.rho.eval(r);
        match self.params.growth {
            Growth::Exponential => {
                let l = self.params.lipschitz;
                (l * kf).exp_m1() * rho / l
            }
            Growth::Linear => kf * rho,
        }
    }

    /// `ε(k, 0) + η(k, w_sup)`.
    pub fn v_bound(&self, k: usize, w_sup: f64) -> f64 {
        self.epsilon(k, 0.0) + self.eta(k, w_sup)
    }
}

pub fn epsilon_eval(model: &ErrorBoundModel, k: usize, r: f64) -> f64 {
    model.epsilon(k, r)
}

pub fn eta_eval(model: &ErrorBoundModel, k: usize, r: f64) -> f64 {
    model.eta(k, r)
}

/// `v(n)` for `n = start..start + vectors.len()`.
///
/// Each `v(n)` is kept exactly as the unevaluated sum `vectors[k] + residuals[k]`,
/// since a single float offset cannot always reproduce `x̃_cl(n)` from `x_cl(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VSequence {
    pub start: usize,
    /// Rounded `v(n)`.
    pub vectors: Vec<StateVector>,
    /// Rounding error of `vectors`: `v(n) = vectors + residuals` exactly.
    pub residuals: Vec<StateVector>,
    /// `‖v(n)‖₂`.
    pub values: Vec<f64>,
    pub sup_norm: f64,
}

impl VSequence {
    pub fn empty(start: usize) -> Self {
        Self {
            start,
            vectors: Vec::new(),
            residuals: Vec::new(),
            values: Vec::new(),
            sup_norm: 0.0,
        }
    }

    pub fn at(&self, n: usize) -> Option<&StateVector> {
        n.checked_sub(self.start).and_then(|k| self.vectors.get(k))
    }

    pub fn norm_at(&self, n: usize) -> Option<f64> {
        n.checked_sub(self.start).and_then(|k| self.values.get(k)).copied()
    }

    /// `x + v(n)` evaluated exactly and rounded once. For `x = x_cl(n)` this is
    /// `x̃_cl(n)` bit for bit.
    pub fn perturb(&self, n: usize, x: &StateVector) -> Option<StateVector> {
        let k = n.checked_sub(self.start)?;
        let (hi, lo) = (self.vectors.get(k)?, self.residuals.get(k)?);
        Some(DVector::from_fn(x.len(), |i, _| {
            let (s, e) = two_sum(x[i], hi[i]);
            s + (e + lo[i])
        }))
    }
}

/// Error-free sum: `a + b = s + e` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// `v(n) = x̃_cl(n) − x_cl(n)` for `n ∈ [from, to)`.
pub fn extract_v(
    predictions: &std::collections::BTreeMap<usize, StateVector>,
    trajectory: &Trajectory,
    from: usize,
    to: usize,
) -> Result<VSequence> {
    let mut seq = VSequence::empty(from);
    for n in from..to {
        let x = trajectory
            .state_at(n)
            .ok_or_else(|| Error::Config(format!("trajectory has no state at {n}")))?;
        let xt = predictions.get(&n).ok_or(Error::ConsistencyHole { time: n })?;
        let mut hi = DVector::zeros(x.len());
        let mut lo = DVector::zeros(x.len());
        for i in 0..x.len() {
            let (s, e) = two_sum(xt[i], -x[i]);
            hi[i] = s;
            lo[i] = e;
        }
        let norm = hi.norm();
        seq.sup_norm = seq.sup_norm.max(norm);
        seq.values.push(norm);
        seq.vectors.push(hi);
        seq.residuals.push(lo);
    }
    Ok(seq)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessBoundReport {
    pub tau_inf: usize,
    pub delta_sigma_inf: usize,
    pub w_sup: f64,
    pub v_bound: f64,
    pub v_observed: f64,
    pub satisfied: bool,
}

/// Compares the observed `‖v‖∞` against `ε(τ∞+Δσ∞, 0) + η(τ∞+Δσ∞, ‖w‖∞)`.
/// The comparison has no slack: the bound is conservative by construction.
pub fn check_theorem_bound(
    v: &VSequence,
    delays: &DelayRecord,
    w_sup: f64,
    model: &ErrorBoundModel,
) -> RobustnessBoundReport {
    let k = delays.tau_inf + delays.delta_sigma_inf;
    let v_bound = model.v_bound(k, w_sup);
    RobustnessBoundReport {
        tau_inf: delays.tau_inf,
        delta_sigma_inf: delays.delta_sigma_inf,
        w_sup,
        v_bound,
        v_observed: v.sup_norm,
        satisfied: v.sup_norm <= v_bound,
    }
}

/// Simulates the delay-free loop in which the sequence active from `σ_i` is
/// generated from `x(σ_i) + v(σ_i)`:
/// `x(n+1) = f(x(n), μ_i(x(σ_i) + v(σ_i), n − σ_i), w(n))`.
///
/// `generate(i, x̂)` returns the sequence for switch `i`; `w[n]` is the
/// disturbance at absolute time `n`. The replay starts at `σ_0` and ends at `end`.
pub fn auxiliary_replay<G>(
    model: &PlantModel,
    x0: &StateVector,
    v: &VSequence,
    w: &[DisturbanceVector],
    switches: &[SwitchEvent],
    end: usize,
    mut generate: G,
) -> Result<Trajectory>
where
    G: FnMut(usize, &StateVector) -> Result<Vec<ControlVector>>,
{
    model.check_state(x0)?;
    let Some(first) = switches.first() else {
        return Ok(Trajectory::new(end, x0.clone()));
    };
    let start = first.sigma;
    let mut traj = Trajectory::new(start, x0.clone());
    for (i, sw) in switches.iter().enumerate() {
        if sw.sigma >= end {
            break;
        }
        let until = switches.get(i + 1).map_or(end, |next| next.sigma).min(end);
        let x_sigma = traj.last_state().clone();
        let measured = v.perturb(sw.sigma, &x_sigma).ok_or(Error::ConsistencyHole { time: sw.sigma })?;
        let sequence = generate(i, &measured)?;
        for n in sw.sigma..until {
            let u = sequence.get(n - sw.sigma).ok_or(Error::Starvation {
                time: n,
                active_stamp: Some(sw.stamp),
            })?;
            let wn = w.get(n).ok_or_else(|| Error::Config(format!("no disturbance for time {n}")))?;
            let next = model.exact_step(traj.last_state(), u, wn);
            ensure_finite(&next, n + 1)?;
            traj.push(u.clone(), next);
        }
    }
    Ok(traj)
}
