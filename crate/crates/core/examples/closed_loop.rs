//! Run the circle-tracking scenario once and print what happened.
//!
//! cargo run --release --example closed_loop [scenario.toml]

use predcomp::experiments::{run_scenario, Scenario};

fn main() -> predcomp::Result<()> {
    let scenario = match std::env::args().nth(1) {
        Some(path) => Scenario::load(path)?,
        None => Scenario::circle_mpc(2),
    };
    let record = run_scenario(&scenario)?;
    println!("{} finished with status {}", scenario.name, record.status);
    println!(
        "switches: {}  tau_inf: {}  delta_sigma_inf: {}",
        record.switches.len(),
        record.delays.tau_inf,
        record.delays.delta_sigma_inf
    );
    println!(
        "consistency: {} inputs checked, {} violations",
        record.consistency.checked_inputs,
        record.consistency.violations.len()
    );
    if let Some(b) = &record.bound {
        println!("|v|_inf = {:.4e} <= {:.4e}: {}", b.v_observed, b.v_bound, b.satisfied);
    }
    println!("max deviation {:.4}", record.max_deviation);
    for n in (0..record.deviation.len()).step_by(50) {
        let x = &record.trajectory.states[n];
        println!("  n={n:3}  x=({:+.3}, {:+.3}, {:+.3}, {:+.3})  d={:.3}", x[0], x[1], x[2], x[3], record.deviation[n]);
    }
    Ok(())
}
