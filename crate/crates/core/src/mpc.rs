//! Finite-horizon optimal control for the circle-tracking task.
//!
//! The objective integrates the stage cost along the predictor trajectory with a
//! composite trapezoid rule and adds a weighted terminal cost. The input disc
//! constraint is enforced by exact radial projection; the speed constraint by a
//! quadratic penalty. The optimizer is spectral projected gradient descent: a
//! Barzilai-Borwein step projected onto the discs gives a feasible direction, and
//! a non-monotone Armijo backtracking search along it picks the step length.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{iterate_approx, ControlVector, LinearStep, PlantModel, StateVector};
use crate::error::{Error, Result};

/// Number of past objective values the non-monotone Armijo test compares against.
const ARMIJO_MEMORY: usize = 10;

/// Stage cost rewarding counterclockwise motion on a circle in the `(x1, x3)` plane.
///
/// `l(x) = w_r (x1² + x3² − R²)² + w_v (x2 + V x3/r)² + w_v (x4 − V x1/r)²`,
/// `r = ‖(x1, x3)‖₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircleCost {
    pub radius: f64,
    pub speed: f64,
    pub radial_weight: f64,
    pub velocity_weight: f64,
    /// States with `r` below this are rejected.
    pub singularity_guard: f64,
}

impl Default for CircleCost {
    fn default() -> Self {
        Self {
            radius: 6.0,
            speed: 10.0,
            radial_weight: 100.0,
            velocity_weight: 0.05,
            singularity_guard: 1e-6,
        }
    }
}

impl CircleCost {
    fn radius_of(&self, x: &StateVector) -> Result<f64> {
        if x.len() != 4 {
            return Err(Error::Dimension {
                context: "circle stage cost state",
                expected: 4,
                found: x.len(),
            });
        }
        let r = x[0].hypot(x[2]);
        if !(r >= self.singularity_guard) {
            return Err(Error::Singularity { radius: r });
        }
        Ok(r)
    }

    pub fn value(&self, x: &StateVector) -> Result<f64> {
        let r = self.radius_of(x)?;
        let s = x[0] * x[0] + x[2] * x[2] - self.radius * self.radius;
        let a = x[1] + self.speed * x[2] / r;
        let b = x[3] - self.speed * x[0] / r;
        Ok(self.radial_weight * s * s + self.velocity_weight * (a * a + b * b))
    }

    pub fn gradient(&self, x: &StateVector) -> Result<StateVector> {
        let r = self.radius_of(x)?;
        let (x1, x3) = (x[0], x[2]);
        let v = self.speed;
        let r3 = r * r * r;
        let s = x1 * x1 + x3 * x3 - self.radius * self.radius;
        let a = x[1] + v * x3 / r;
        let b = x[3] - v * x1 / r;
        let wr = self.radial_weight;
        let wv = self.velocity_weight;
        Ok(DVector::from_vec(vec![
            4.0 * wr * s * x1 - 2.0 * wv * a * v * x1 * x3 / r3 - 2.0 * wv * b * v * x3 * x3 / r3,
            2.0 * wv * a,
            4.0 * wr * s * x3 + 2.0 * wv * a * v * x1 * x1 / r3 + 2.0 * wv * b * v * x1 * x3 / r3,
            2.0 * wv * b,
        ]))
    }
}

/// Stage cost with the default circle (radius 6, speed 10).
pub fn stage_cost(x: &StateVector) -> Result<f64> {
    CircleCost::default().value(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub sample_time: f64,
    /// Terminal cost is `terminal_weight · l(x(NT))`.
    pub terminal_weight: f64,
    /// Bound on `x2² + x4²`; `inf` disables the constraint.
    pub speed_constraint: f64,
    /// Radius of the input disc `u1² + u2² ≤ radius²`.
    pub input_radius: f64,
    /// Trapezoid nodes per sample interval.
    pub quadrature_subsamples: usize,
    pub penalty_weight: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the projected-gradient norm.
    pub tolerance: f64,
    pub armijo_c: f64,
    pub cost: CircleCost,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            sample_time: 0.1,
            terminal_weight: 20.0,
            speed_constraint: 30.0,
            input_radius: 10.0,
            quadrature_subsamples: 1,
            penalty_weight: 1e3,
            max_iterations: 500,
            tolerance: 1e-6,
            armijo_c: 1e-4,
            cost: CircleCost::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self, model: &PlantModel) -> Result<()> {
        if self.sample_time <= 0.0 {
            return Err(Error::Config("mpc sample_time must be positive".into()));
        }
        if (self.sample_time - model.sample_time).abs() > 1e-12 * model.sample_time {
            return Err(Error::Config(format!(
                "mpc sample_time {} differs from plant sample time {}",
                self.sample_time, model.sample_time
            )));
        }
        if model.state_dim() != 4 || model.input_dim() != 2 {
            return Err(Error::Config(
                "the circle-tracking MPC needs a 4-state, 2-input plant".into(),
            ));
        }
        if !(self.input_radius > 0.0) {
            return Err(Error::Config("input_radius must be positive".into()));
        }
        if !(self.speed_constraint > 0.0) {
            return Err(Error::Config("speed_constraint must be positive (inf disables it)".into()));
        }
        if self.quadrature_subsamples == 0 {
            return Err(Error::Config("quadrature_subsamples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Radial projection onto `{u : ‖u‖₂ ≤ radius}`. The result satisfies
/// `Σ uᵢ² ≤ radius²` in floating point, not only in exact arithmetic.
pub fn project_disc(u: &ControlVector, radius: f64) -> ControlVector {
    let limit = radius * radius;
    if u.dot(u) <= limit {
        return u.clone();
    }
    let mut p = u * (radius / u.norm());
    while p.dot(&p) > limit {
        p *= 1.0 - f64::EPSILON;
    }
    p
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcpSolution {
    pub controls: Vec<ControlVector>,
    pub predicted_states: Vec<StateVector>,
    /// Integral plus terminal cost, without penalty terms.
    pub cost: f64,
    /// Penalized objective actually minimized.
    pub objective: f64,
    /// Largest excess of `x2² + x4²` over its bound along the prediction.
    pub constraint_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Evaluation {
    cost: f64,
    penalty: f64,
    violation: f64,
    gradient: Option<Vec<ControlVector>>,
}

impl Evaluation {
    fn objective(&self) -> f64 {
        self.cost + self.penalty
    }
}

/// Objective evaluator for one solve. Holds the predictor and its sub-step maps.
struct Problem<'a> {
    config: &'a MpcConfig,
    model: &'a PlantModel,
    substeps: Vec<LinearStep>,
    x0: &'a StateVector,
}

impl<'a> Problem<'a> {
    fn new(config: &'a MpcConfig, model: &'a PlantModel, x0: &'a StateVector) -> Self {
        let substeps = model.approx_substeps(config.quadrature_subsamples);
        Self {
            config,
            model,
            substeps,
            x0,
        }
    }

    fn speed_excess(&self, x: &StateVector) -> f64 {
        let bound = self.config.speed_constraint;
        if bound.is_finite() {
            (x[1] * x[1] + x[3] * x[3] - bound).max(0.0)
        } else {
            0.0
        }
    }

    fn evaluate(&self, u: &[ControlVector], with_gradient: bool) -> Result<Evaluation> {
        let cfg = self.config;
        let cost_fn = &cfg.cost;
        let n = u.len();
        let s = self.substeps.len();
        let h = cfg.sample_time / s as f64;

        let mut states = Vec::with_capacity(n + 1);
        states.push(self.x0.clone());
        for uk in u {
            let next = self.model.approx_step(states.last().unwrap(), uk);
            states.push(next);
        }

        // node weights from the trapezoid rule plus the terminal cost
        let node_weight = |k: usize| -> f64 {
            let mut w = 0.0;
            if k > 0 {
                w += h / 2.0;
            }
            if k < n {
                w += h / 2.0;
            }
            if k == n {
                w += cfg.terminal_weight;
            }
            w
        };

        let mut cost = 0.0;
        let mut penalty = 0.0;
        let mut violation = 0.0f64;
        for (k, x) in states.iter().enumerate() {
            cost += node_weight(k) * cost_fn.value(x)?;
            if k > 0 {
                let e = self.speed_excess(x);
                penalty += cfg.penalty_weight * e * e;
                violation = violation.max(e);
            }
        }
        // interior quadrature nodes within each interval
        let mut interior: Vec<Vec<StateVector>> = Vec::with_capacity(n);
        for k in 0..n {
            let mut pts = Vec::with_capacity(s.saturating_sub(1));
            for map in &self.substeps[..s - 1] {
                let y = map.apply(&states[k], &u[k]);
                cost += h * cost_fn.value(&y)?;
                pts.push(y);
            }
            interior.push(pts);
        }

        let gradient = if with_gradient {
            let a_t = self.model.approx_map().a.transpose();
            let b_t = self.model.approx_map().b.transpose();
            let mut grad = vec![DVector::zeros(u.first().map_or(0, |v| v.len())); n];
            let mut lambda = self.node_gradient(&states[n], node_weight(n))?;
            for k in (0..n).rev() {
                let mut gu = &b_t * &lambda;
                let mut next_lambda = &a_t * &lambda;
                for (map, y) in self.substeps[..s - 1].iter().zip(&interior[k]) {
                    let gy = cost_fn.gradient(y)? * h;
                    gu += map.b.transpose() * &gy;
                    next_lambda += map.a.transpose() * &gy;
                }
                grad[k] = gu;
                if k > 0 {
                    lambda = next_lambda + self.node_gradient(&states[k], node_weight(k))?;
                }
            }
            Some(grad)
        } else {
            None
        };

        Ok(Evaluation {
            cost,
            penalty,
            violation,
            gradient,
        })
    }

    /// Gradient of the weighted stage cost and penalty at a non-initial node.
    fn node_gradient(&self, x: &StateVector, weight: f64) -> Result<StateVector> {
        let mut g = self.config.cost.gradient(x)? * weight;
        let e = self.speed_excess(x);
        if e > 0.0 {
            let c = 4.0 * self.config.penalty_weight * e;
            g[1] += c * x[1];
            g[3] += c * x[3];
        }
        Ok(g)
    }
}

fn check_controls(config: &MpcConfig, model: &PlantModel, u: &[ControlVector]) -> Result<()> {
    if u.len() != config.horizon {
        return Err(Error::Dimension {
            context: "mpc control sequence length",
            expected: config.horizon,
            found: u.len(),
        });
    }
    for uk in u {
        model.check_input(uk)?;
    }
    Ok(())
}

/// Penalized objective `J(x0, u)` along the predictor trajectory.
pub fn trajectory_cost(
    config: &MpcConfig,
    model: &PlantModel,
    x0: &StateVector,
    u: &[ControlVector],
) -> Result<f64> {
    model.check_state(x0)?;
    check_controls(config, model, u)?;
    Ok(Problem::new(config, model, x0).evaluate(u, false)?.objective())
}

/// Penalized objective and its gradient with respect to each control.
pub fn objective_gradient(
    config: &MpcConfig,
    model: &PlantModel,
    x0: &StateVector,
    u: &[ControlVector],
) -> Result<(f64, Vec<ControlVector>)> {
    model.check_state(x0)?;
    check_controls(config, model, u)?;
    let eval = Problem::new(config, model, x0).evaluate(u, true)?;
    Ok((eval.objective(), eval.gradient.expect("gradient requested")))
}

fn dot(a: &[ControlVector], b: &[ControlVector]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn diff(a: &[ControlVector], b: &[ControlVector]) -> Vec<ControlVector> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn projected_step(u: &[ControlVector], g: &[ControlVector], alpha: f64, radius: f64) -> Vec<ControlVector> {
    u.iter()
        .zip(g)
        .map(|(uk, gk)| project_disc(&(uk - gk * alpha), radius))
        .collect()
}

/// Minimizes the penalized objective from `x0`. Without a warm start the
/// iteration begins at zero input. Hitting the iteration cap is not an error:
/// the best iterate comes back with `converged = false`.
pub fn solve_ocp(
    config: &MpcConfig,
    model: &PlantModel,
    x0: &StateVector,
    warm_start: Option<&[ControlVector]>,
) -> Result<OcpSolution> {
    config.validate(model)?;
    model.check_state(x0)?;
    if config.horizon == 0 {
        return Err(Error::Config("mpc horizon must be at least 1".into()));
    }
    let radius = config.input_radius;
    let mut u: Vec<ControlVector> = match warm_start {
        Some(ws) => {
            check_controls(config, model, ws)?;
            ws.iter().map(|uk| project_disc(uk, radius)).collect()
        }
        None => vec![DVector::zeros(model.input_dim()); config.horizon],
    };
    let problem = Problem::new(config, model, x0);
    let mut eval = problem.evaluate(&u, true)?;
    let mut alpha = 1e-3;
    // recent objective values for the non-monotone Armijo reference
    let mut history: VecDeque<f64> = VecDeque::with_capacity(ARMIJO_MEMORY);
    let mut best: Option<(Vec<ControlVector>, Evaluation)> = None;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        let g = eval.gradient.clone().expect("gradient evaluated");
        let pg = diff(&projected_step(&u, &g, 1.0, radius), &u);
        if dot(&pg, &pg).sqrt() < config.tolerance {
            converged = true;
            break;
        }
        let f0 = eval.objective();
        if history.len() == ARMIJO_MEMORY {
            history.pop_front();
        }
        history.push_back(f0);
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        // feasible direction from one projected spectral step, then backtracking along it
        let d = diff(&projected_step(&u, &g, alpha, radius), &u);
        let slope = dot(&g, &d);
        let mut accepted = None;
        let mut lambda = 1.0;
        for _ in 0..60 {
            let candidate: Vec<ControlVector> = u
                .iter()
                .zip(&d)
                .map(|(uk, dk)| project_disc(&(uk + dk * lambda), radius))
                .collect();
            // singular trial points count as rejected steps
            if let Ok(e) = problem.evaluate(&candidate, true) {
                if e.objective().is_finite() && e.objective() <= reference + config.armijo_c * lambda * slope {
                    accepted = Some((candidate, e));
                    break;
                }
            }
            lambda *= 0.5;
        }
        iterations += 1;
        let Some((next, next_eval)) = accepted else {
            break;
        };
        let g_next = next_eval.gradient.as_ref().expect("gradient evaluated");
        let step = diff(&next, &u);
        let sy = dot(&step, &diff(g_next, &g));
        alpha = if sy > 0.0 {
            (dot(&step, &step) / sy).clamp(1e-12, 1e6)
        } else {
            1e6
        };
        if best.as_ref().is_none_or(|(_, b)| eval.objective() < b.objective()) {
            best = Some((u.clone(), eval));
        }
        u = next;
        eval = next_eval;
    }
    if !converged {
        if let Some((bu, be)) = best {
            if be.objective() < eval.objective() {
                u = bu;
                eval = be;
            }
        }
    }

    let predicted = iterate_approx(model, 0, x0, &u, u.len())?;
    Ok(OcpSolution {
        controls: u,
        predicted_states: predicted.states,
        cost: eval.cost,
        objective: eval.objective(),
        constraint_violation: eval.violation,
        iterations,
        converged,
    })
}

/// Inputs that hold a circular orbit of the given radius and speed from `x0`
/// (centripetal acceleration toward the origin), projected onto the input disc.
pub fn centripetal_sequence(config: &MpcConfig, x0: &StateVector, steps: usize) -> Vec<ControlVector> {
    let c = &config.cost;
    let omega = c.speed / c.radius;
    let phase0 = x0[2].atan2(x0[0]);
    (0..steps)
        .map(|k| {
            let phase = phase0 + omega * config.sample_time * k as f64;
            let acc = c.speed * omega;
            let u = DVector::from_vec(vec![-acc * phase.cos(), -acc * phase.sin()]);
            project_disc(&u, config.input_radius)
        })
        .collect()
}
