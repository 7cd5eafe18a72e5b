//! One optimal control solve from a point near the target circle.
//!
//! cargo run --release --example mpc_solve

use predcomp::mpc::{centripetal_sequence, solve_ocp, stage_cost, trajectory_cost, MpcConfig};
use predcomp::{PlantModel, Predictor, StateVector};

fn main() -> predcomp::Result<()> {
    let model = PlantModel::double_integrator_pair(0.1, Predictor::Exact)?;
    let config = MpcConfig {
        speed_constraint: 900.0,
        ..MpcConfig::default()
    };
    let x0 = StateVector::from_vec(vec![6.5, 0.5, 0.5, 9.0]);
    let sol = solve_ocp(&config, &model, &x0, None)?;
    println!(
        "objective {:.6}  iterations {}  converged {}  violation {:.2e}",
        sol.objective, sol.iterations, sol.converged, sol.constraint_violation
    );
    let zero = vec![StateVector::zeros(2); config.horizon];
    let orbit = centripetal_sequence(&config, &x0, config.horizon);
    println!("zero input objective        {:.6}", trajectory_cost(&config, &model, &x0, &zero)?);
    println!("centripetal input objective {:.6}", trajectory_cost(&config, &model, &x0, &orbit)?);
    for (k, (u, x)) in sol.controls.iter().zip(&sol.predicted_states).enumerate() {
        println!(
            "k={k:2}  u=({:+.3}, {:+.3}) |u|^2={:7.3}  l(x)={:.4}",
            u[0],
            u[1],
            u.norm_squared(),
            stage_cost(x)?
        );
    }
    Ok(())
}
