//! A saturated PD law on two double integrators behind a lossy, jittery network.
//!
//! cargo run --release --example static_feedback

use predcomp::experiments::{run_scenario, Scenario};
use predcomp::{DelayModel, LossModel, Predictor};

fn main() -> predcomp::Result<()> {
    for tau_max in [0, 2, 4] {
        let mut s = Scenario::integrator_static(tau_max);
        s.plant.predictor = Predictor::Euler;
        s.disturbance_bound = 0.02;
        s.sensor_channel.delay = DelayModel::Uniform { min: 0, max: 2 };
        s.sensor_channel.loss = LossModel::Bernoulli { p: 0.2 };
        s.actuator_channel.delay = DelayModel::Uniform { min: 0, max: tau_max };
        s.actuator_channel.loss = LossModel::Bernoulli { p: 0.1 };
        let r = run_scenario(&s)?;
        let b = r.bound.as_ref().expect("ok runs carry a bound report");
        println!(
            "tau_max={tau_max}: |x(N)|={:.4}  tau_inf={}  dsigma_inf={}  |v|={:.3e} <= {:.3e}  consistent={}",
            r.trajectory.last_state().norm(),
            b.tau_inf,
            b.delta_sigma_inf,
            b.v_observed,
            b.v_bound,
            r.consistency.is_consistent()
        );
    }
    Ok(())
}
