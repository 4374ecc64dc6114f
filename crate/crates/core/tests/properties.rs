use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swarmloc::assignment::{compute_marginals, BpConfig, FactorGraph};
use swarmloc::crlb::{fisher_matrix, joint_crlb, CrlbConfig};
use swarmloc::geometry::{parse_trace, sample_random_swarm, ScenarioParams, SwarmState, Vec3};
use swarmloc::measurement::{build_measurements, ordered_pairs, quantize, ChannelLists, NoiseModel, OtfsGridConfig, TrueObservations};
use swarmloc::positioning::{gd_minimize, square_error, AnchorSet, GdConfig, InitStrategy};
use swarmloc::tip::{compute_maps, run_cold_start, TipConfig};
use swarmloc::velocity::{build_design, estimate_velocities};

fn grid(bandwidth: f64) -> OtfsGridConfig {
    OtfsGridConfig { bandwidth, ..Default::default() }.with_round_c()
}

fn swarm(n: usize, anchored: bool, seed: u64) -> SwarmState {
    let params = if anchored { ScenarioParams { n, ..Default::default() } } else { ScenarioParams { n, anchor_positions: vec![], ..Default::default() } };
    sample_random_swarm(&params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn rotation(ax: f64, ay: f64, az: f64) -> nalgebra::Rotation3<f64> {
    nalgebra::Rotation3::from_euler_angles(ax, ay, az)
}

fn arb_permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn swarms_replay_from_their_seed(seed in any::<u64>(), n in 5usize..10) {
        let a = swarm(n, true, seed);
        prop_assert_eq!(&a, &swarm(n, true, seed));
        prop_assert_ne!(&a, &swarm(n, true, seed.wrapping_add(1)));
    }

    #[test]
    fn trace_fits_the_cube(pts in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4, -1e4f64..1e4), 2..12), side in 10.0f64..5000.0) {
        let text: String = pts.iter().enumerate().map(|(id, (x, y, z))| format!("0,{id},{x},{y},{z}\n")).collect();
        let center = Vec3::new(side, -side, 0.5 * side);
        let snaps = parse_trace(&text, side, center, 2).unwrap();
        for p in &snaps[0].positions {
            for a in 0..3 {
                prop_assert!((p[a] - center[a]).abs() <= side / 2.0 + 1e-9);
            }
        }
    }

    #[test]
    fn quadruple_identities(seed in any::<u64>(), quad in arb_permutation(6)) {
        let t = TrueObservations::compute(&swarm(6, false, seed)).unwrap();
        let [i, j, k, h] = [quad[0], quad[1], quad[2], quad[3]];
        let d = t.distance(i, j, k) - t.distance(i, j, h) + t.distance(i, k, h) - t.distance(j, h, k);
        let w = t.velocity(i, j, k) + t.velocity(i, j, h) - t.velocity(k, h, i) - t.velocity(k, h, j);
        prop_assert!(d.abs() <= 1e-9 * 4000.0);
        prop_assert!(w.abs() <= 1e-9 * 400.0);
    }

    #[test]
    fn rounding_stays_within_half_a_step(x in -1e5f64..1e5, step in 0.01f64..500.0) {
        prop_assert!((quantize(x, step) - x).abs() <= step / 2.0 * (1.0 + 1e-12));
    }

    #[test]
    fn lists_are_within_half_a_step_and_reciprocal(seed in any::<u64>(), b in prop::sample::select(vec![3e6, 30e6, 300e6])) {
        let s = swarm(7, true, seed);
        let g = grid(b);
        let m = build_measurements(&s, &g).unwrap();
        let t = TrueObservations::compute(&s).unwrap();
        for (i, j) in ordered_pairs(7) {
            for k in (0..7).filter(|&k| k != i) {
                let e = m.lists.list(i, j)[m.truth_maps.get(i, j, k)];
                prop_assert!((e.distance - t.distance(i, j, k)).abs() <= g.distance_step() / 2.0 + 1e-9);
                prop_assert!((e.velocity - t.velocity(i, j, k)).abs() <= g.velocity_step() / 2.0 + 1e-9);
            }
            for k in (0..7).filter(|&k| k != i && k != j) {
                let a = t.distance(i, j, k);
                prop_assert!((a - t.distance(j, i, k)).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }

    #[test]
    fn beliefs_are_distributions(seed in any::<u64>(), n in 5usize..8) {
        let m = build_measurements(&swarm(n, true, seed), &grid(3e6)).unwrap();
        let pi = compute_marginals(&m.lists, &m.grid, &BpConfig::default()).unwrap();
        for [i, j, k] in FactorGraph::new(n, false).variables() {
            let row = pi.row(i, j, k);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn beliefs_follow_a_relabeling(seed in any::<u64>(), perm in arb_permutation(6)) {
        let m = build_measurements(&swarm(6, true, seed), &grid(3e6)).unwrap();
        let mut relabeled = ChannelLists::zeros(6);
        for (i, j) in ordered_pairs(6) {
            relabeled.list_mut(perm[i], perm[j]).copy_from_slice(m.lists.list(i, j));
        }
        let cfg = BpConfig::default();
        let a = compute_marginals(&m.lists, &m.grid, &cfg).unwrap();
        let b = compute_marginals(&relabeled, &m.grid, &cfg).unwrap();
        for [i, j, k] in FactorGraph::new(6, false).variables() {
            for (x, y) in a.row(i, j, k).iter().zip(b.row(perm[i], perm[j], perm[k])) {
                prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn square_error_ignores_rigid_motions(seed in any::<u64>(), ax in -3.2f64..3.2, ay in -1.5f64..1.5, az in -3.2f64..3.2, shift in (-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3)) {
        let s = swarm(6, false, seed);
        let m = build_measurements(&s, &grid(30e6)).unwrap();
        let (obs, _) = swarmloc::tip::apply_maps(&m.lists, &m.truth_maps);
        let t: Vec<Vec3> = swarm(6, false, seed ^ 0x5a5a).positions();
        let r = rotation(ax, ay, az);
        let moved: Vec<Vec3> = t.iter().map(|p| r * p + Vec3::new(shift.0, shift.1, shift.2)).collect();
        let (e0, e1) = (square_error(&t, &obs), square_error(&moved, &obs));
        prop_assert!((e0 - e1).abs() <= 1e-9 * e0.max(1.0));
    }

    #[test]
    fn descent_never_ends_above_its_start(seed in any::<u64>()) {
        let s = swarm(8, true, seed);
        let anchors = AnchorSet::from_swarm(&s);
        let m = build_measurements(&s, &grid(30e6)).unwrap();
        let (obs, _) = swarmloc::tip::apply_maps(&m.lists, &m.truth_maps);
        let t0 = InitStrategy::scenario_prior().draw(&anchors, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let sol = gd_minimize(&obs, &t0, &anchors, &GdConfig::default()).unwrap();
        prop_assert!(sol.error <= square_error(&t0, &obs));
        for a in 0..4 {
            prop_assert_eq!(sol.positions[a], s.positions()[a]);
        }
    }

    #[test]
    fn velocity_residual_is_orthogonal_to_the_design(seed in any::<u64>()) {
        let s = swarm(8, true, seed);
        let m = build_measurements(&s, &grid(30e6)).unwrap();
        let (_, omega) = swarmloc::tip::apply_maps(&m.lists, &m.truth_maps);
        let design = build_design(&s.positions(), &AnchorSet::from_swarm(&s)).unwrap();
        let est = estimate_velocities(&design, &omega).unwrap();
        let x = nalgebra::DVector::from_iterator(3 * design.mobile.len(), design.mobile.iter().flat_map(|&i| est.velocities[i].iter().copied().collect::<Vec<_>>()));
        let b = nalgebra::DVector::from_iterator(design.rows.len(), design.rows.iter().map(|&(i, j, k)| omega.get(i, j, k)));
        let normal = design.matrix.transpose() * (&b - &design.matrix * x);
        let scale = (design.matrix.transpose() * &b).norm();
        prop_assert!(normal.norm() <= 1e-6 * scale);
    }

    #[test]
    fn velocity_estimates_rotate_with_the_swarm(seed in any::<u64>(), ax in -3.2f64..3.2, ay in -1.5f64..1.5, az in -3.2f64..3.2) {
        let s = swarm(8, true, seed);
        let m = build_measurements(&s, &grid(30e6)).unwrap();
        let (_, omega) = swarmloc::tip::apply_maps(&m.lists, &m.truth_maps);
        let r = rotation(ax, ay, az);
        let rotated: Vec<Vec3> = s.positions().iter().map(|p| r * p).collect();
        let anchors = AnchorSet::new(rotated.iter().enumerate().map(|(i, p)| (i < 4).then_some(*p)).collect());
        let a = estimate_velocities(&build_design(&s.positions(), &AnchorSet::from_swarm(&s)).unwrap(), &omega).unwrap();
        let b = estimate_velocities(&build_design(&rotated, &anchors).unwrap(), &omega).unwrap();
        for (x, y) in a.velocities.iter().zip(&b.velocities) {
            prop_assert!((r * x - y).norm() <= 1e-6 * x.norm().max(1.0));
        }
    }

    #[test]
    fn computed_maps_sort_the_echo_lists(seed in any::<u64>()) {
        let p = swarm(7, false, seed).positions();
        let maps = compute_maps(&p);
        prop_assert!(maps.is_bijective());
        for (i, j) in ordered_pairs(7) {
            let mut by_slot = vec![f64::NAN; 6];
            for k in (0..7).filter(|&k| k != i) {
                by_slot[maps.get(i, j, k)] = if k == j { 0.0 } else { swarmloc::measurement::red_distance(&p[i], &p[j], &p[k]).unwrap() };
            }
            prop_assert!(by_slot.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tip_keeps_anchors_and_replays(seed in any::<u64>(), b in prop::sample::select(vec![3e6, 30e6])) {
        let s = swarm(8, true, seed);
        let m = build_measurements(&s, &grid(b)).unwrap();
        let anchors = AnchorSet::from_swarm(&s);
        let cfg = TipConfig::default();
        let run = || run_cold_start(&m, &anchors, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let (x, y) = (run(), run());
        prop_assert_eq!(format!("{x:?}"), format!("{y:?}"));
        if let Ok(r) = x {
            for u in s.uavs().iter().filter(|u| u.is_anchor) {
                prop_assert_eq!(r.positions[u.id], u.position);
                prop_assert_eq!(r.velocities[u.id], Vec3::zeros());
            }
            let first = r.iterations.first().unwrap().residual;
            prop_assert!(r.residual <= first, "{} > {first}", r.residual);
        }
    }

    #[test]
    fn fisher_matrix_is_symmetric_and_bounds_are_monotone(seed in any::<u64>()) {
        let cfg = CrlbConfig { samples: 20, use_prior: true };
        let scenario = ScenarioParams::default();
        let at = |b: f64, tf: f64| {
            let g = OtfsGridConfig { frame_duration: tf, ..grid(b) };
            fisher_matrix(&cfg, &g, &scenario, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
        };
        let f = at(30e6, 0.02);
        let asym = (&f.matrix - f.matrix.transpose()).amax();
        prop_assert!(asym <= 1e-12 * f.matrix.amax());
        let bound = |b: f64, tf: f64| joint_crlb(&at(b, tf)).unwrap();
        prop_assert!(bound(60e6, 0.02).position <= bound(30e6, 0.02).position);
        prop_assert!(bound(30e6, 0.04).velocity <= bound(30e6, 0.02).velocity);
    }
}

#[test]
fn truth_maps_are_bijections_with_sight_line_first() {
    for seed in 0..20 {
        let m = build_measurements(&swarm(6, true, seed), &grid(30e6).with_noise(NoiseModel::Noiseless)).unwrap();
        assert!(m.truth_maps.is_bijective());
        for (i, j) in ordered_pairs(6) {
            assert_eq!(m.truth_maps.get(i, j, j), 0);
        }
    }
}
