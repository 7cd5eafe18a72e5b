//! Plant models: the exact sampled map `x(n+1) = f(x(n), u(n)) + w(n)` and the
//! approximate predictor map used by the controller, plus trajectory iteration
//! and disturbance sampling.
//!
//! Plants are continuous-time LTI systems `ẋ = A x + B u` sampled with a zero-order
//! hold. The exact map is the closed-form ZOH discretization; the predictor is one
//! of exact / forward Euler / classic RK4 applied over one sample period.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateVector = DVector<f64>;
pub type ControlVector = DVector<f64>;

/// Additive process disturbance together with the sup-norm bound it was drawn under.
#[derive(Clone, Debug, PartialEq)]
pub struct DisturbanceVector {
    pub entries: DVector<f64>,
    pub bound: f64,
}

impl DisturbanceVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DVector::zeros(dim),
            bound: 0.0,
        }
    }

    pub fn from_entries(entries: DVector<f64>) -> Self {
        let bound = entries.amax();
        Self { entries, bound }
    }

    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }
}

/// Which one-step map the controller uses for prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    #[default]
    Exact,
    Euler,
    Rk4,
}

impl Predictor {
    /// Convergence order of the scheme (0 for the exact map).
    pub fn order(self) -> u32 {
        match self {
            Predictor::Exact => 0,
            Predictor::Euler => 1,
            Predictor::Rk4 => 4,
        }
    }
}

impl std::str::FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Predictor::Exact),
            "euler" => Ok(Predictor::Euler),
            "rk4" => Ok(Predictor::Rk4),
            other => Err(Error::Config(format!("unknown predictor '{other}'"))),
        }
    }
}

/// Discrete linear map `x ↦ A x + B u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearStep {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearStep {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn apply(&self, x: &StateVector, u: &ControlVector) -> StateVector {
        &self.a * x + &self.b * u
    }

    /// Induced 2-norm of the state matrix, i.e. the Lipschitz constant of the map in x.
    pub fn state_gain(&self) -> f64 {
        spectral_norm(&self.a)
    }
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Continuous-time LTI plant `ẋ = A x + B u`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousLti {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl ContinuousLti {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Config("state matrix must be square".into()));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension {
                context: "input matrix rows",
                expected: a.nrows(),
                found: b.nrows(),
            });
        }
        Ok(Self { a, b })
    }

    /// Two decoupled double integrators, state `(x1, x2, x3, x4)`, `ẋ = (x2, u1, x4, u2)`.
    pub fn double_integrator_pair() -> Self {
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = 1.0;
        a[(2, 3)] = 1.0;
        let mut b = DMatrix::zeros(4, 2);
        b[(1, 0)] = 1.0;
        b[(3, 1)] = 1.0;
        Self { a, b }
    }

    /// Scalar open-loop unstable plant `ẋ = x + u`.
    pub fn scalar_exponential() -> Self {
        Self {
            a: DMatrix::from_element(1, 1, 1.0),
            b: DMatrix::from_element(1, 1, 1.0),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn discretize(&self, scheme: Predictor, h: f64) -> LinearStep {
        match scheme {
            Predictor::Exact => self.zoh(h),
            Predictor::Euler => self.euler(h),
            Predictor::Rk4 => self.rk4(h),
        }
    }

    /// Exact zero-order-hold discretization. Nilpotent state matrices use the
    /// terminating series; everything else goes through the augmented exponential.
    pub fn zoh(&self, h: f64) -> LinearStep {
        let n = self.state_dim();
        let m = self.input_dim();
        if let Some(order) = nilpotency_index(&self.a) {
            let mut phi = DMatrix::identity(n, n);
            let mut gamma_core = DMatrix::identity(n, n) * h;
            let mut power = DMatrix::identity(n, n);
            let mut fact = 1.0;
            for k in 1..order {
                power = &power * &self.a;
                fact *= k as f64;
                phi += &power * (h.powi(k as i32) / fact);
                gamma_core += &power * (h.powi(k as i32 + 1) / (fact * (k as f64 + 1.0)));
            }
            return LinearStep {
                a: phi,
                b: gamma_core * &self.b,
            };
        }
        let mut aug = DMatrix::zeros(n + m, n + m);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * h));
        aug.view_mut((0, n), (n, m)).copy_from(&(&self.b * h));
        let e = aug.exp();
        LinearStep {
            a: e.view((0, 0), (n, n)).into_owned(),
            b: e.view((0, n), (n, m)).into_owned(),
        }
    }

    pub fn euler(&self, h: f64) -> LinearStep {
        let n = self.state_dim();
        LinearStep {
            a: DMatrix::identity(n, n) + &self.a * h,
            b: &self.b * h,
        }
    }

    /// Classic RK4 with the input held constant over the step. For an LTI field the
    /// four stages collapse to the truncated exponential series below.
    pub fn rk4(&self, h: f64) -> LinearStep {
        let n = self.state_dim();
        let id = DMatrix::identity(n, n);
        let ha = &self.a * h;
        let ha2 = &ha * &ha;
        let ha3 = &ha2 * &ha;
        let ha4 = &ha3 * &ha;
        let a = &id + &ha + &ha2 / 2.0 + &ha3 / 6.0 + &ha4 / 24.0;
        let b = (&id + &ha / 2.0 + &ha2 / 6.0 + &ha3 / 24.0) * &self.b * h;
        LinearStep { a, b }
    }
}

fn nilpotency_index(a: &DMatrix<f64>) -> Option<usize> {
    let n = a.nrows();
    let mut power = DMatrix::identity(n, n);
    for k in 1..=n {
        power = &power * a;
        if power.iter().all(|v| *v == 0.0) {
            return Some(k);
        }
    }
    None
}

/// A sampled plant together with the controller's approximate predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    pub continuous: ContinuousLti,
    pub sample_time: f64,
    pub predictor: Predictor,
    exact: LinearStep,
    approx: LinearStep,
    /// Declared per-step log-Lipschitz constant: `e^L` bounds the x-gain of both maps.
    pub lipschitz_l: f64,
}

impl PlantModel {
    /// Builds the model with `lipschitz_l` set to the smallest admissible value.
    pub fn new(continuous: ContinuousLti, sample_time: f64, predictor: Predictor) -> Result<Self> {
        if !(sample_time > 0.0 && sample_time.is_finite()) {
            return Err(Error::Config(format!(
                "sample time must be positive, got {sample_time}"
            )));
        }
        let exact = continuous.zoh(sample_time);
        let approx = match predictor {
            Predictor::Exact => exact.clone(),
            scheme => continuous.discretize(scheme, sample_time),
        };
        let mut model = Self {
            continuous,
            sample_time,
            predictor,
            exact,
            approx,
            lipschitz_l: 0.0,
        };
        model.lipschitz_l = model.min_lipschitz();
        Ok(model)
    }

    /// The two-double-integrator plant sampled at `sample_time`.
    pub fn double_integrator_pair(sample_time: f64, predictor: Predictor) -> Result<Self> {
        Self::new(ContinuousLti::double_integrator_pair(), sample_time, predictor)
    }

    pub fn scalar_exponential(sample_time: f64, predictor: Predictor) -> Result<Self> {
        Self::new(ContinuousLti::scalar_exponential(), sample_time, predictor)
    }

    /// Replaces the declared Lipschitz constant; rejects values the maps violate.
    pub fn with_lipschitz(mut self, l: f64) -> Result<Self> {
        let min = self.min_lipschitz();
        if !(l.is_finite() && l > 0.0) || l < min {
            return Err(Error::Config(format!(
                "declared Lipschitz constant {l} is below the analytic minimum {min}"
            )));
        }
        self.lipschitz_l = l;
        Ok(self)
    }

    /// `ln max(‖A_exact‖₂, ‖A_pred‖₂)`, floored at a small positive value so the
    /// exponential bound forms stay defined for contractive plants.
    pub fn min_lipschitz(&self) -> f64 {
        let gain = self.exact.state_gain().max(self.approx.state_gain());
        gain.ln().max(1e-9)
    }

    pub fn state_dim(&self) -> usize {
        self.exact.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.exact.input_dim()
    }

    pub fn exact_map(&self) -> &LinearStep {
        &self.exact
    }

    pub fn approx_map(&self) -> &LinearStep {
        &self.approx
    }

    /// Nominal exact step plus the additive disturbance.
    pub fn exact_step(&self, x: &StateVector, u: &ControlVector, w: &DisturbanceVector) -> StateVector {
        self.exact.apply(x, u) + &w.entries
    }

    pub fn approx_step(&self, x: &StateVector, u: &ControlVector) -> StateVector {
        self.approx.apply(x, u)
    }

    /// Predictor maps over the fractions `j/subsamples` of one sample period,
    /// `j = 1..=subsamples`. The last entry is the predictor map itself.
    pub fn approx_substeps(&self, subsamples: usize) -> Vec<LinearStep> {
        let s = subsamples.max(1);
        (1..=s)
            .map(|j| {
                if j == s {
                    self.approx.clone()
                } else {
                    let h = self.sample_time * j as f64 / s as f64;
                    self.continuous.discretize(self.predictor, h)
                }
            })
            .collect()
    }

    /// Worst-case one-step mismatch `‖f̃(x,u) − f(x,u,0)‖` over `‖x‖ ≤ x_max`, `‖u‖ ≤ u_max`.
    pub fn local_error_bound(&self, x_max: f64, u_max: f64) -> f64 {
        let da = spectral_norm(&(&self.approx.a - &self.exact.a));
        let db = spectral_norm(&(&self.approx.b - &self.exact.b));
        let state_term = if da == 0.0 { 0.0 } else { da * x_max };
        state_term + db * u_max
    }

    pub(crate) fn check_state(&self, x: &StateVector) -> Result<()> {
        check_dim("state", self.state_dim(), x.len())
    }

    pub(crate) fn check_input(&self, u: &ControlVector) -> Result<()> {
        check_dim("input", self.input_dim(), u.len())
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            found,
        })
    }
}

/// States `x(n0), …, x(n)` and the inputs `u(n0), …, u(n-1)` that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub start_time: usize,
    pub states: Vec<StateVector>,
    pub inputs: Vec<ControlVector>,
}

impl Trajectory {
    pub fn new(start_time: usize, x0: StateVector) -> Self {
        Self {
            start_time,
            states: vec![x0],
            inputs: Vec::new(),
        }
    }

    pub fn end_time(&self) -> usize {
        self.start_time + self.inputs.len()
    }

    pub fn state_at(&self, n: usize) -> Option<&StateVector> {
        n.checked_sub(self.start_time).and_then(|k| self.states.get(k))
    }

    pub fn input_at(&self, n: usize) -> Option<&ControlVector> {
        n.checked_sub(self.start_time).and_then(|k| self.inputs.get(k))
    }

    pub fn last_state(&self) -> &StateVector {
        self.states.last().expect("trajectory always holds its initial state")
    }

    pub(crate) fn push(&mut self, u: ControlVector, x_next: StateVector) {
        self.inputs.push(u);
        self.states.push(x_next);
    }
}

fn check_span(n0: usize, n: usize, available: usize, what: &'static str) -> Result<usize> {
    if n < n0 {
        return Err(Error::Config(format!("final time {n} precedes initial time {n0}")));
    }
    let len = n - n0;
    if available < len {
        return Err(Error::Config(format!(
            "{what} sequence covers {available} steps, {len} required"
        )));
    }
    Ok(len)
}

/// `x(k, n0, x0, u, w)` for `k = n0..=n`; `u[j]` and `w[j]` act at time `n0 + j`.
pub fn iterate_exact(
    model: &PlantModel,
    n0: usize,
    x0: &StateVector,
    u: &[ControlVector],
    w: &[DisturbanceVector],
    n: usize,
) -> Result<Trajectory> {
    model.check_state(x0)?;
    let len = check_span(n0, n, u.len(), "input")?;
    check_span(n0, n, w.len(), "disturbance")?;
    let mut traj = Trajectory::new(n0, x0.clone());
    for j in 0..len {
        model.check_input(&u[j])?;
        check_dim("disturbance", model.state_dim(), w[j].entries.len())?;
        let next = model.exact_step(traj.last_state(), &u[j], &w[j]);
        ensure_finite(&next, n0 + j + 1)?;
        traj.push(u[j].clone(), next);
    }
    Ok(traj)
}

/// `x̃(k, n0, x0, u)` for `k = n0..=n` using the predictor map.
pub fn iterate_approx(
    model: &PlantModel,
    n0: usize,
    x0: &StateVector,
    u: &[ControlVector],
    n: usize,
) -> Result<Trajectory> {
    check_span(n0, n, u.len(), "input")?;
    iterate_approx_with(model, n0, x0, n, |k| Ok(u[k - n0].clone()))
}

/// Like [`iterate_approx`] but pulls the input for absolute time `k` from a lookup.
pub fn iterate_approx_with<F>(
    model: &PlantModel,
    n0: usize,
    x0: &StateVector,
    n: usize,
    mut input_at: F,
) -> Result<Trajectory>
where
    F: FnMut(usize) -> Result<ControlVector>,
{
    model.check_state(x0)?;
    if n < n0 {
        return Err(Error::Config(format!("final time {n} precedes initial time {n0}")));
    }
    let mut traj = Trajectory::new(n0, x0.clone());
    for k in n0..n {
        let u = input_at(k)?;
        model.check_input(&u)?;
        let next = model.approx_step(traj.last_state(), &u);
        ensure_finite(&next, k + 1)?;
        traj.push(u, next);
    }
    Ok(traj)
}

pub(crate) fn ensure_finite(x: &DVector<f64>, step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup { step })
    }
}

/// One disturbance draw with entries i.i.d. uniform on `[-bound, bound]`.
pub fn sample_disturbance<R: Rng + ?Sized>(rng: &mut R, bound: f64, dim: usize) -> DisturbanceVector {
    let bound = bound.max(0.0);
    let entries = if bound == 0.0 {
        DVector::zeros(dim)
    } else {
        DVector::from_fn(dim, |_, _| rng.random_range(-bound..=bound))
    };
    DisturbanceVector { entries, bound }
}
