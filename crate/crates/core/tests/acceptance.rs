//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.
//!
//! cargo test --test acceptance

use std::collections::BTreeSet;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use predcomp::bounds::{epsilon_eval, eta_eval};
use predcomp::dynamics::{iterate_approx, iterate_exact};
use predcomp::experiments::{
    emit_report, linear_fit, random_scenario, run_check_suite, run_scenario, sweep_tau_max, CheckSuiteConfig,
    Scenario,
};
use predcomp::mpc::{objective_gradient, project_disc, stage_cost, MpcConfig};
use predcomp::{
    BoundParams, ControlVector, DelayModel, DisturbanceVector, ErrorBoundModel, Growth, LossModel, PlantModel,
    Predictor, Rho, StateVector,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn report(results: &mut Vec<bool>, id: usize, title: &str, outcome: Outcome) {
    let tag = if outcome.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {id}. {title}: {}", outcome.detail);
    results.push(outcome.pass);
}

/// Criteria 1 to 3 share one randomized suite: 100 scenarios, 20 of them replayed.
fn random_suite() -> (Outcome, Outcome, Outcome) {
    let config = CheckSuiteConfig {
        runs: 100,
        seed: 20_240_601,
        replays: 20,
        steps: 120,
    };
    let summary = run_check_suite(&config).expect("suite runs");
    let secs = summary.elapsed.as_secs_f64();
    let generators: BTreeSet<bool> = (0..config.runs)
        .map(|i| matches!(random_scenario(config.seed, i, config.steps).generator, predcomp::GeneratorSpec::Mpc(_)))
        .collect();
    let checked: usize = summary.outcomes.iter().map(|o| o.checked_inputs).sum();
    let c1 = Outcome::new(
        summary.consistency_violations == 0 && summary.not_ok == 0 && generators.len() == 2 && secs < 60.0,
        format!(
            "{} runs, {} applied inputs checked, {} violations, {} runs not ok, both generators: {}, {:.1}s (limit 60s)",
            summary.outcomes.len(),
            checked,
            summary.consistency_violations,
            summary.not_ok,
            generators.len() == 2,
            secs
        ),
    );
    let worst = summary
        .outcomes
        .iter()
        .filter_map(|o| Some(o.v_observed? / o.v_bound?).filter(|r| r.is_finite()))
        .fold(0.0, f64::max);
    let c2 = Outcome::new(
        summary.bound_failures == 0,
        format!(
            "{} of {} runs within the bound, worst observed/bound ratio {:.3}",
            summary.outcomes.len() - summary.bound_failures,
            summary.outcomes.len(),
            worst
        ),
    );
    let c3 = Outcome::new(
        summary.replayed == 20 && summary.equivalence_failures == 0,
        format!(
            "{} runs replayed, {} not bitwise identical",
            summary.replayed, summary.equivalence_failures
        ),
    );
    (c1, c2, c3)
}

fn nominal_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut runs = 0;
    let mut all_ok = true;
    for i in 0..10 {
        let mut s = random_scenario(77, i, 80);
        s.plant.predictor = Predictor::Exact;
        s.disturbance_bound = 0.0;
        let r = run_scenario(&s).expect("scenario runs");
        all_ok &= r.is_ok();
        runs += 1;
        worst = worst.max(r.v.sup_norm);
    }
    Outcome::new(
        all_ok && worst <= 1e-12,
        format!("{runs} runs with varied delays and losses, max |v| = {worst:e} (limit 1e-12)"),
    )
}

/// Reference solution of x' = x by RK4 with many small steps.
fn oracle_exp(x0: f64, t: f64) -> f64 {
    let n = 10_000;
    let dt = t / n as f64;
    let mut x = x0;
    for _ in 0..n {
        let k1 = x;
        let k2 = x + 0.5 * dt * k1;
        let k3 = x + 0.5 * dt * k2;
        let k4 = x + dt * k3;
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}

fn bound_formulas() -> Outcome {
    let h = 0.1;
    let model = PlantModel::scalar_exponential(h, Predictor::Euler).unwrap();
    let zero_u = vec![ControlVector::zeros(1); 10];
    let x0s: [f64; 3] = [1.0, -0.7, 0.25];
    let x_scale = x0s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    // per-step constant L = h for x' = x; K covers the largest Euler state over ten steps
    let tight = ErrorBoundModel::new(BoundParams::derive(&model, 0.0, x_scale * 1.1f64.powi(10))).unwrap();
    let loose = ErrorBoundModel::new(BoundParams {
        lipschitz: 1.0,
        k: 1.0,
        h,
        p: 1,
        rho: Rho::Identity,
        growth: Growth::Exponential,
    })
    .unwrap();

    let mut eps_ok = true;
    let mut eps_margin = f64::INFINITY;
    for &x0 in &x0s {
        let xs = StateVector::from_element(1, x0);
        let pred = iterate_approx(&model, 0, &xs, &zero_u, 10).unwrap();
        for k in 1..=10 {
            let err = (pred.states[k][0] - oracle_exp(x0, h * k as f64)).abs();
            for m in [&tight, &loose] {
                let eps = epsilon_eval(m, k, 0.0);
                eps_ok &= err <= eps;
            }
            eps_margin = eps_margin.min(epsilon_eval(&tight, k, 0.0) - err);
        }
    }

    // disturbance propagation through the exact map, constant worst case and random draws
    let mut eta_ok = true;
    let mut eta_margin = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let zero_w = vec![DisturbanceVector::zeros(1); 10];
    let x0 = StateVector::from_element(1, 0.4);
    let nominal = iterate_exact(&model, 0, &x0, &zero_u, &zero_w, 10).unwrap();
    for trial in 0..101 {
        let w: Vec<DisturbanceVector> = (0..10)
            .map(|_| {
                let v = if trial == 0 { 0.1 } else { rng.random_range(-0.1..=0.1) };
                DisturbanceVector::from_entries(DVector::from_element(1, v))
            })
            .collect();
        let perturbed = iterate_exact(&model, 0, &x0, &zero_u, &w, 10).unwrap();
        for k in 1..=10 {
            let spread = (perturbed.states[k][0] - nominal.states[k][0]).abs();
            // independent oracle: sum of e^{h (k-1-j)} w_j
            let oracle: f64 = (0..k).map(|j| (h * (k - 1 - j) as f64).exp() * w[j].entries[0]).sum();
            eta_ok &= (spread - oracle.abs()).abs() <= 1e-12;
            for m in [&tight, &loose] {
                eta_ok &= spread <= eta_eval(m, k, 0.1);
            }
            eta_margin = eta_margin.min(eta_eval(&tight, k, 0.1) - spread);
        }
    }
    Outcome::new(
        eps_ok && eta_ok,
        format!(
            "k = 1..10, L = {:.3}, K = {:.4}: min epsilon slack {:.3e}, min eta slack {:.3e} (also L = 1, K = 1)",
            tight.params.lipschitz, tight.params.k, eps_margin, eta_margin
        ),
    )
}

fn mpc_checks(emitted: &[ControlVector]) -> Outcome {
    let model = PlantModel::double_integrator_pair(0.1, Predictor::Exact).unwrap();
    let config = MpcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_rel = 0.0f64;
    for _ in 0..20 {
        let r = rng.random_range(3.0..9.0);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let x0 = StateVector::from_vec(vec![
            r * phi.cos(),
            rng.random_range(-8.0..8.0),
            r * phi.sin(),
            rng.random_range(-8.0..8.0),
        ]);
        let u: Vec<ControlVector> = (0..config.horizon)
            .map(|_| {
                let ang = rng.random_range(0.0..std::f64::consts::TAU);
                let mag = rng.random_range(0.0..10.0);
                DVector::from_vec(vec![mag * ang.cos(), mag * ang.sin()])
            })
            .collect();
        let (_, g) = objective_gradient(&config, &model, &x0, &u).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..u.len() {
            for i in 0..2 {
                let step = 1e-6 * u[k][i].abs().max(1.0);
                let mut up = u.clone();
                up[k][i] += step;
                let mut dn = u.clone();
                dn[k][i] -= step;
                let fu = predcomp::mpc::trajectory_cost(&config, &model, &x0, &up).unwrap();
                let fd = predcomp::mpc::trajectory_cost(&config, &model, &x0, &dn).unwrap();
                let fd_g = (fu - fd) / (up[k][i] - dn[k][i]);
                num += (g[k][i] - fd_g).powi(2);
                den += fd_g.powi(2);
            }
        }
        worst_rel = worst_rel.max(num.sqrt() / den.sqrt().max(1e-300));
    }

    let mut projected_ok = emitted.iter().all(|u| u[0] * u[0] + u[1] * u[1] <= 100.0);
    for _ in 0..10_000 {
        let u = DVector::from_vec(vec![rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3)]);
        let p = project_disc(&u, 10.0);
        projected_ok &= p[0] * p[0] + p[1] * p[1] <= 100.0;
    }

    let l_on = stage_cost(&StateVector::from_vec(vec![6.0, 0.0, 0.0, 10.0])).unwrap();
    let l_off = stage_cost(&StateVector::from_vec(vec![7.0, 0.0, 0.0, 0.0])).unwrap();
    let l_ok = l_on == 0.0 && ((l_off - 16905.0) / 16905.0).abs() <= 1e-12;
    Outcome::new(
        worst_rel <= 1e-5 && projected_ok && l_ok,
        format!(
            "gradient rel. error max {worst_rel:.2e} over 20 points (limit 1e-5); {} emitted and 10000 random projections inside the disc: {projected_ok}; l(6,0,0,10) = {l_on}, l(7,0,0,0) = {l_off}",
            emitted.len()
        ),
    )
}

fn determinism() -> Outcome {
    let mut circle = Scenario::circle_mpc(3);
    circle.steps = 120;
    let mut lossy = Scenario::integrator_static(2);
    lossy.plant.predictor = Predictor::Euler;
    lossy.disturbance_bound = 0.05;
    lossy.sensor_channel.delay = DelayModel::Uniform { min: 0, max: 3 };
    lossy.sensor_channel.loss = LossModel::Bernoulli { p: 0.3 };
    lossy.actuator_channel.loss = LossModel::Bernoulli { p: 0.1 };
    let produce = || {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![run_scenario(&circle).unwrap(), run_scenario(&lossy).unwrap()];
        let (sweep_records, rows) = sweep_tau_max(&lossy, &[0, 1, 2]).unwrap();
        let mut all = records;
        all.extend(sweep_records);
        let paths = emit_report(dir.path(), &all, &rows).unwrap();
        let bytes: Vec<Vec<u8>> = paths.deterministic_files().iter().map(|p| fs::read(p).unwrap()).collect();
        (dir, bytes)
    };
    let (_a, first) = produce();
    let (_b, second) = produce();
    let total: usize = first.iter().map(Vec::len).sum();
    Outcome::new(
        first == second,
        format!("{} output files, {total} bytes, identical across two invocations: {}", first.len(), first == second),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results = Vec::new();

    let (c1, c2, c3) = random_suite();
    report(&mut results, 1, "prediction consistency", c1);
    report(&mut results, 2, "bound on |v|", c2);
    report(&mut results, 3, "closed-loop / auxiliary equivalence", c3);
    report(&mut results, 4, "nominal exactness", nominal_exactness());
    report(&mut results, 5, "epsilon / eta soundness", bound_formulas());

    let sweep_start = Instant::now();
    let taus: Vec<usize> = (0..=6).collect();
    let (records, rows) = sweep_tau_max(&Scenario::circle_mpc(0), &taus).expect("sweep runs");
    let sweep_secs = sweep_start.elapsed().as_secs_f64();
    let devs: Vec<f64> = rows.iter().map(|r| r.max_deviation).collect();
    let inversions: Vec<f64> = devs
        .windows(2)
        .filter(|w| w[1] < w[0])
        .map(|w| (w[0] - w[1]) / w[0])
        .collect();
    let shape_ok = inversions.len() <= 1 && inversions.iter().all(|&r| r <= 0.05);
    let fit = linear_fit(&taus.iter().map(|&t| t as f64).zip(devs.iter().copied()).collect::<Vec<_>>()).unwrap();
    let shared = rows.windows(2).all(|w| w[0].disturbance_digest == w[1].disturbance_digest);
    let all_ok = records.iter().all(|r| r.is_ok());
    report(
        &mut results,
        6,
        "deviation grows linearly in tau_max",
        Outcome::new(
            all_ok && shared && shape_ok && fit.r_squared >= 0.85 && fit.slope >= 0.0 && sweep_secs < 120.0,
            format!(
                "max deviation {:?}, {} inversion(s), slope {:.4}, R^2 {:.4} (limit 0.85), shared noise {shared}, {sweep_secs:.1}s (limit 120s)",
                devs.iter().map(|d| (d * 1e4).round() / 1e4).collect::<Vec<_>>(),
                inversions.len(),
                fit.slope,
                fit.r_squared
            ),
        ),
    );
    let tau_ok = rows.iter().all(|r| r.tau_inf == r.tau_max + 2);
    report(
        &mut results,
        7,
        "tau_inf = tau_max + 2",
        Outcome::new(
            tau_ok,
            format!(
                "(tau_max, tau_inf) = {:?}",
                rows.iter().map(|r| (r.tau_max, r.tau_inf)).collect::<Vec<_>>()
            ),
        ),
    );

    let emitted: Vec<ControlVector> = records
        .iter()
        .flat_map(|r| r.sent.values().flat_map(|s| s.controls.iter().cloned()))
        .collect();
    report(&mut results, 8, "MPC solver checks", mpc_checks(&emitted));
    report(&mut results, 9, "determinism of report files", determinism());

    let passed = results.iter().filter(|p| **p).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.1}s",
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
