//! Replay a networked run as a delay-free loop with measurement error v and
//! check that both trajectories agree bit for bit.
//!
//! cargo run --release --example auxiliary_replay

use predcomp::experiments::{replay_auxiliary, run_scenario, Scenario};
use predcomp::{DelayModel, LossModel};

fn main() -> predcomp::Result<()> {
    let mut s = Scenario::circle_mpc(3);
    s.steps = 120;
    s.actuator_channel.delay = DelayModel::Uniform { min: 1, max: 3 };
    s.actuator_channel.loss = LossModel::Bernoulli { p: 0.1 };
    let record = run_scenario(&s)?;
    let (replay, eq) = replay_auxiliary(&record)?;
    println!(
        "replayed {} states from sigma_0 = {}",
        eq.compared_states, replay.start_time
    );
    println!("bitwise equal: {}  (max |diff| = {:e})", eq.bitwise_equal(), eq.max_abs_difference);
    println!("sup |v| = {:.4e}", record.v.sup_norm);
    Ok(())
}
