use nalgebra::DVector;
use proptest::prelude::*;

use predcomp::bounds::{epsilon_eval, eta_eval};
use predcomp::dynamics::{iterate_approx, iterate_exact};
use predcomp::mpc::project_disc;
use predcomp::transport::{resolve_latest, ControlSequencePacket, MeasurementPacket};
use predcomp::{
    ActuatorBuffer, BoundParams, ControlVector, DisturbanceVector, ErrorBoundModel, Growth, PlantModel, Predictor, Rho,
    StateVector,
};

fn vec_of(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

fn inputs(n: usize) -> impl Strategy<Value = Vec<ControlVector>> {
    prop::collection::vec(vec_of(2, -10.0, 10.0).prop_map(DVector::from_vec), n)
}

fn disturbances(n: usize, bound: f64) -> impl Strategy<Value = Vec<DisturbanceVector>> {
    prop::collection::vec(
        vec_of(4, -bound, bound).prop_map(|v| DisturbanceVector::from_entries(DVector::from_vec(v))),
        n,
    )
}

fn plant(p: Predictor) -> PlantModel {
    PlantModel::double_integrator_pair(0.1, p).unwrap()
}

fn bits(a: &StateVector, b: &StateVector) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_iteration_is_a_semigroup(
        x0 in vec_of(4, -5.0, 5.0),
        u in inputs(12),
        w in disturbances(12, 0.1),
        split in 0usize..=12,
    ) {
        let m = plant(Predictor::Exact);
        let x0 = DVector::from_vec(x0);
        let whole = iterate_exact(&m, 3, &x0, &u, &w, 15).unwrap();
        let first = iterate_exact(&m, 3, &x0, &u[..split], &w[..split], 3 + split).unwrap();
        let second = iterate_exact(&m, 3 + split, first.last_state(), &u[split..], &w[split..], 15).unwrap();
        prop_assert!(bits(whole.last_state(), second.last_state()));
        prop_assert!(bits(whole.state_at(3 + split).unwrap(), first.last_state()));
    }

    #[test]
    fn iteration_is_deterministic(x0 in vec_of(4, -5.0, 5.0), u in inputs(8), w in disturbances(8, 0.2)) {
        let m = plant(Predictor::Exact);
        let x0 = DVector::from_vec(x0);
        let a = iterate_exact(&m, 0, &x0, &u, &w, 8).unwrap();
        let b = iterate_exact(&m, 0, &x0, &u, &w, 8).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn exact_predictor_matches_the_undisturbed_plant(x0 in vec_of(4, -5.0, 5.0), u in inputs(10)) {
        let m = plant(Predictor::Exact);
        let x0 = DVector::from_vec(x0);
        let w = vec![DisturbanceVector::zeros(4); 10];
        let exact = iterate_exact(&m, 0, &x0, &u, &w, 10).unwrap();
        let approx = iterate_approx(&m, 0, &x0, &u, 10).unwrap();
        for (a, b) in exact.states.iter().zip(&approx.states) {
            prop_assert!(bits(a, b));
        }
    }

    #[test]
    fn euler_prediction_error_is_bounded(
        x0 in vec_of(4, -5.0, 5.0),
        offset in vec_of(4, -0.5, 0.5),
        u in inputs(10),
    ) {
        let m = plant(Predictor::Euler);
        let params = BoundParams::derive(&m, 10f64.hypot(10.0), 100.0);
        let bound = ErrorBoundModel::new(params).unwrap();
        let x0 = DVector::from_vec(x0);
        let xt0 = &x0 + DVector::from_vec(offset);
        let w = vec![DisturbanceVector::zeros(4); 10];
        let exact = iterate_exact(&m, 0, &x0, &u, &w, 10).unwrap();
        let pred = iterate_approx(&m, 0, &xt0, &u, 10).unwrap();
        let r = (&xt0 - &x0).norm();
        for k in 0..=10 {
            let err = (&pred.states[k] - &exact.states[k]).norm();
            prop_assert!(err <= epsilon_eval(&bound, k, r) * (1.0 + 1e-12), "k={} err={} eps={}", k, err, epsilon_eval(&bound, k, r));
        }
    }

    #[test]
    fn buffer_switches_move_forward(
        packets in prop::collection::vec((0usize..40, 0usize..4, 0usize..6), 1..25),
    ) {
        // (stamp, lead time before the stamp, measurement age)
        let m = 4;
        let mut buffer = ActuatorBuffer::new(m).unwrap().with_startup_input(DVector::zeros(1));
        for now in 0..50 {
            for (stamp, lead, age) in &packets {
                if stamp.saturating_sub(*lead) == now {
                    buffer.insert(
                        ControlSequencePacket {
                            stamp_n: *stamp,
                            measurement_stamp: stamp.saturating_sub(*age),
                            sequence: vec![DVector::from_element(1, *stamp as f64); m],
                        },
                        now,
                    );
                }
            }
            let before = buffer.active_stamp();
            let applied = buffer.read(now);
            if let (Some(b), Some(a)) = (before, buffer.active_stamp()) {
                prop_assert!(a >= b);
            }
            if applied.is_err() {
                break;
            }
        }
        let log = buffer.switch_log();
        for pair in log.windows(2) {
            prop_assert!(pair[1].sigma > pair[0].sigma);
            prop_assert!(pair[1].stamp > pair[0].stamp);
        }
        for s in log {
            prop_assert_eq!(s.sigma, s.stamp);
        }
    }

    #[test]
    fn projection_lands_in_the_disc_and_is_closest(
        u in vec_of(2, -50.0, 50.0),
        others in prop::collection::vec(vec_of(2, -10.0, 10.0), 20),
        radius in 0.5f64..20.0,
    ) {
        let u = DVector::from_vec(u);
        let p = project_disc(&u, radius);
        prop_assert!(p.dot(&p) <= radius * radius);
        prop_assert_eq!(project_disc(&p, radius), p.clone());
        if u.norm() > radius {
            prop_assert!((p.norm() - radius).abs() <= 1e-12 * radius);
        } else {
            prop_assert_eq!(&p, &u);
        }
        for q in others {
            let q = DVector::from_vec(q);
            if q.norm() <= radius {
                prop_assert!((&u - &p).norm() <= (&u - &q).norm() + 1e-9);
            }
        }
    }

    #[test]
    fn latest_measurement_ignores_arrival_order(
        stamps in prop::collection::btree_set(0usize..1000, 1..20),
        seed in any::<u64>(),
    ) {
        let mut packets: Vec<MeasurementPacket> = stamps
            .iter()
            .map(|&s| MeasurementPacket { stamp_ns: s, state: DVector::from_element(1, s as f64) })
            .collect();
        let expected = *stamps.iter().max().unwrap();
        // deterministic shuffle
        let mut state = seed | 1;
        for i in (1..packets.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            packets.swap(i, (state % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(resolve_latest(&packets).unwrap().stamp_ns, expected);
    }

    #[test]
    fn error_functions_are_monotone(
        l in 0.01f64..2.0,
        kconst in 0.0f64..20.0,
        r1 in 0.0f64..5.0,
        dr in 0.0f64..5.0,
        k in 0usize..40,
        linear in any::<bool>(),
    ) {
        let model = ErrorBoundModel::new(BoundParams {
            lipschitz: l,
            k: kconst,
            h: 0.1,
            p: 1,
            rho: Rho::Identity,
            growth: if linear { Growth::Linear } else { Growth::Exponential },
        })
        .unwrap();
        let r2 = r1 + dr;
        prop_assert!(epsilon_eval(&model, k, r1) <= epsilon_eval(&model, k, r2));
        prop_assert!(epsilon_eval(&model, k, r1) <= epsilon_eval(&model, k + 1, r1));
        prop_assert!(eta_eval(&model, k, r1) <= eta_eval(&model, k, r2));
        prop_assert!(eta_eval(&model, k, r1) <= eta_eval(&model, k + 1, r1));
        prop_assert_eq!(eta_eval(&model, k, 0.0), 0.0);
        if r1 > 0.0 || kconst > 0.0 {
            prop_assert!(model.v_bound(k, r1) < model.v_bound(k + 1, r1));
        }
    }
}
