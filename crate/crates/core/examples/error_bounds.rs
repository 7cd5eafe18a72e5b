//! Prediction error and disturbance propagation of Euler on x' = x against the
//! closed-form bounds.
//!
//! cargo run --example error_bounds

use predcomp::bounds::{epsilon_eval, eta_eval};
use predcomp::{BoundParams, ErrorBoundModel, Growth, Rho};

fn main() -> predcomp::Result<()> {
    let h: f64 = 0.1;
    // exact: x -> e^h x, Euler: x -> (1 + h) x
    let exact = h.exp();
    let euler = 1.0 + h;
    let l = h;
    // the one-step mismatch is (e^h - 1 - h) |x|, and the Euler state from
    // x0 = 1 stays below (1 + h)^10 over ten steps
    let x_max = euler.powi(10);
    let k = (exact - euler) * x_max / (l * h);
    let model = ErrorBoundModel::new(BoundParams {
        lipschitz: l,
        k,
        h,
        p: 1,
        rho: Rho::Identity,
        growth: Growth::Exponential,
    })?;
    println!(" k   pred error   epsilon(k,0)   propagated w   eta(k,0.1)");
    for steps in 1..=10 {
        let x0 = 1.0;
        let pred_err = (exact.powi(steps) - euler.powi(steps)).abs() * x0;
        // worst case: w = 0.1 every step, pushed through the exact map
        let propagated: f64 = (0..steps).map(|j| 0.1 * exact.powi(j)).sum();
        println!(
            "{steps:2}   {pred_err:.6}     {:.6}       {propagated:.6}       {:.6}",
            epsilon_eval(&model, steps as usize, 0.0),
            eta_eval(&model, steps as usize, 0.1)
        );
    }
    Ok(())
}
