use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use predcomp::mpc::{objective_gradient, solve_ocp, trajectory_cost, MpcConfig};
use predcomp::{ControlVector, PlantModel, Predictor, StateVector};

fn plant() -> PlantModel {
    PlantModel::double_integrator_pair(0.1, Predictor::Exact).unwrap()
}

fn near_orbit(rng: &mut ChaCha8Rng) -> StateVector {
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = rng.random_range(5.0..7.0);
    let v = rng.random_range(8.0..11.0);
    StateVector::from_vec(vec![r * phi.cos(), -v * phi.sin(), r * phi.sin(), v * phi.cos()])
}

fn random_controls(rng: &mut ChaCha8Rng, n: usize) -> Vec<ControlVector> {
    (0..n)
        .map(|_| DVector::from_vec(vec![rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0)]))
        .collect()
}

#[test]
fn gradient_matches_central_differences_with_subsampling_and_euler() {
    let model = PlantModel::double_integrator_pair(0.1, Predictor::Euler).unwrap();
    let config = MpcConfig {
        quadrature_subsamples: 3,
        speed_constraint: 60.0,
        ..MpcConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let x0 = near_orbit(&mut rng);
        let u = random_controls(&mut rng, config.horizon);
        let (_, g) = objective_gradient(&config, &model, &x0, &u).unwrap();
        let mut err = 0.0;
        let mut norm = 0.0;
        for k in 0..u.len() {
            for i in 0..2 {
                let h = 1e-6;
                let mut up = u.clone();
                up[k][i] += h;
                let mut dn = u.clone();
                dn[k][i] -= h;
                let fd = (trajectory_cost(&config, &model, &x0, &up).unwrap()
                    - trajectory_cost(&config, &model, &x0, &dn).unwrap())
                    / (up[k][i] - dn[k][i]);
                err += (g[k][i] - fd).powi(2);
                norm += fd * fd;
            }
        }
        assert!(err.sqrt() <= 1e-5 * norm.sqrt(), "relative error {}", err.sqrt() / norm.sqrt());
    }
}

#[test]
fn shifted_warm_start_does_not_lose_the_tail() {
    let model = plant();
    let config = MpcConfig {
        speed_constraint: 900.0,
        ..MpcConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let x0 = near_orbit(&mut rng);
        let first = solve_ocp(&config, &model, &x0, None).unwrap();
        let mut shifted: Vec<ControlVector> = first.controls[1..].to_vec();
        shifted.push(first.controls.last().unwrap().clone());
        let x1 = &first.predicted_states[1];
        let tail_cost = trajectory_cost(&config, &model, x1, &shifted).unwrap();
        let second = solve_ocp(&config, &model, x1, Some(&shifted)).unwrap();
        assert!(second.objective <= tail_cost + config.tolerance, "{} > {}", second.objective, tail_cost);
    }
}

#[test]
fn finer_quadrature_converges() {
    let model = plant();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x0 = near_orbit(&mut rng);
    let u = random_controls(&mut rng, 10);
    let cost = |s: usize| {
        let config = MpcConfig {
            quadrature_subsamples: s,
            terminal_weight: 0.0,
            speed_constraint: f64::INFINITY,
            ..MpcConfig::default()
        };
        trajectory_cost(&config, &model, &x0, &u).unwrap()
    };
    let values: Vec<f64> = [1, 2, 4, 8, 16, 32].iter().map(|&s| cost(s)).collect();
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    // the trapezoid rule is second order: halving the node spacing quarters the change
    for pair in diffs.windows(2).skip(1) {
        let ratio = pair[0] / pair[1];
        assert!((3.0..5.5).contains(&ratio), "ratio {ratio} from {values:?}");
    }
}

#[test]
fn solution_is_no_worse_than_zero_input() {
    let model = plant();
    let config = MpcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let x0 = near_orbit(&mut rng);
        let zero = vec![ControlVector::zeros(2); config.horizon];
        let sol = solve_ocp(&config, &model, &x0, None).unwrap();
        assert!(sol.objective <= trajectory_cost(&config, &model, &x0, &zero).unwrap());
        assert!(sol.controls.iter().all(|u| u.dot(u) <= 100.0));
        assert_eq!(sol.predicted_states.len(), config.horizon + 1);
    }
}
