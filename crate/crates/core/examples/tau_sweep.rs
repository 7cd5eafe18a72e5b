//! Maximal deviation from the target circle as the worst-case delay grows.
//!
//! cargo run --release --example tau_sweep

use predcomp::experiments::{linear_fit, sweep_tau_max, Scenario};

fn main() -> predcomp::Result<()> {
    let taus: Vec<usize> = (0..=6).collect();
    let (_, rows) = sweep_tau_max(&Scenario::circle_mpc(0), &taus)?;
    println!("tau_max  tau_inf  max_dev   v_observed  v_bound");
    for r in &rows {
        println!(
            "{:7}  {:7}  {:7.4}  {:10.4}  {:7.4}",
            r.tau_max,
            r.tau_inf,
            r.max_deviation,
            r.v_observed.unwrap_or(f64::NAN),
            r.v_bound.unwrap_or(f64::NAN)
        );
    }
    let pts: Vec<_> = rows.iter().map(|r| (r.tau_max as f64, r.max_deviation)).collect();
    if let Some(fit) = linear_fit(&pts) {
        println!("slope {:.4} per step, R^2 {:.4}", fit.slope, fit.r_squared);
    }
    Ok(())
}
