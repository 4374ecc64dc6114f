//! Independent checks run by `oracle-check`: closed forms against finite
//! differences, algebraic identities, and BP against exhaustive search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::assignment::{brute_force_maps, estimate_maps_from_lists, BpConfig};
use crate::crlb::{delta_position_jacobian, omega_jacobians};
use crate::error::Result;
use crate::geometry::{lissajous_state, sample_random_swarm, LissajousParams, ScenarioParams, SwarmState, Vec3};
use crate::measurement::{build_measurements, radial_velocity, red_distance, AssignmentMaps, ChannelLists, NoiseModel, OtfsGridConfig};
use crate::positioning::{gradient, square_error, AnchorSet, OrderedDistances};
use crate::tip::{run_cold_start, TipConfig};
use crate::measurement::TrueObservations;

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub name: &'static str,
    pub passed: bool,
    /// Worst error or observed rate, depending on the check.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

fn report(name: &'static str, value: f64, threshold: f64, lower_is_better: bool, detail: String) -> OracleReport {
    let passed = if lower_is_better { value <= threshold } else { value >= threshold };
    OracleReport { name, passed, value, threshold, detail }
}

fn free_swarm(n: usize, rng: &mut ChaCha8Rng) -> Result<SwarmState> {
    sample_random_swarm(&ScenarioParams { n, anchor_positions: vec![], ..Default::default() }, rng)
}

/// Worst relative residual of both quadruple identities over `count` random
/// quadruples, relative to the sum of absolute terms.
pub fn check_identities(count: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let s = free_swarm(4, &mut rng)?;
        let p = s.positions();
        let d = |a: usize, b: usize, c: usize| red_distance(&p[a], &p[b], &p[c]);
        let w = |a: usize, b: usize, c: usize| radial_velocity(&s, a, b, c);
        let (i, j, k, h) = (0, 1, 2, 3);
        let td = [d(i, j, k)?, -d(i, j, h)?, d(i, k, h)?, -d(j, h, k)?];
        let tw = [w(i, j, k)?, w(i, j, h)?, -w(k, h, i)?, -w(k, h, j)?];
        for t in [td, tw] {
            let scale = t.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
            worst = worst.max(t.iter().sum::<f64>().abs() / scale);
        }
    }
    Ok(report("quadruple identities", worst, 1e-9, true, format!("{count} quadruples")))
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if norm == 0.0 { diff } else { diff / norm }
}

// Central difference of `f` with respect to every coordinate of `x`.
fn central<F: FnMut(&[Vec3]) -> Result<f64>>(x: &[Vec3], h: f64, mut f: F) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    let mut out = Vec::with_capacity(3 * x.len());
    for i in 0..x.len() {
        for a in 0..3 {
            y[i][a] = x[i][a] + h;
            let fp = f(&y)?;
            y[i][a] = x[i][a] - h;
            let fm = f(&y)?;
            y[i][a] = x[i][a];
            out.push((fp - fm) / (2.0 * h));
        }
    }
    Ok(out)
}

fn flat(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|x| [x.x, x.y, x.z]).collect()
}

/// Square-error gradient against central differences at perturbed truths.
pub fn check_gradient(count: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 20.0).expect("valid");
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let n = rng.random_range(4..=8);
        let s = free_swarm(n, &mut rng)?;
        let obs = OrderedDistances::from_truth(&TrueObservations::compute(&s)?);
        let t: Vec<Vec3> = s.positions().iter().map(|p| p + Vec3::from_fn(|_, _| jitter.sample(&mut rng))).collect();
        let g = flat(&gradient(&t, &obs, &AnchorSet::none(n)));
        let fd = central(&t, 1e-3, |y| Ok(square_error(y, &obs)))?;
        worst = worst.max(rel(&g, &fd));
    }
    Ok(report("square-error gradient", worst, 1e-4, true, format!("{count} instances")))
}

/// Relative-distance and radial-velocity Jacobians against central differences.
pub fn check_jacobians(count: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let n = rng.random_range(3..=6);
        let s = free_swarm(n, &mut rng)?;
        let (p, v) = (s.positions(), s.velocities());
        let none = AnchorSet::none(n);
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        let k = if rng.random_bool(0.25) { j } else { (0..n).filter(|&k| k != i && k != j).nth(rng.random_range(0..n - 2)).unwrap() };
        let omega = |p: &[Vec3], v: &[Vec3]| radial_velocity(&SwarmState::from_arrays(p, v, 0)?, i, j, k);
        let (gp, gv) = omega_jacobians(&p, &v, &none, i, j, k)?;
        worst = worst.max(rel(gp.as_slice(), &central(&p, 1e-4, |y| omega(y, &v))?));
        worst = worst.max(rel(gv.as_slice(), &central(&v, 1e-4, |y| omega(&p, y))?));
        if k != j {
            let gd = delta_position_jacobian(&p, &none, i, j, k)?;
            worst = worst.max(rel(gd.as_slice(), &central(&p, 1e-4, |y| red_distance(&y[i], &y[j], &y[k]))?));
        }
    }
    Ok(report("distance and Doppler Jacobians", worst, 1e-4, true, format!("{count} instances")))
}

/// Radial velocity against the time derivative of the two path legs under
/// straight-line motion, and Lissajous velocity against its position.
pub fn check_time_derivatives(count: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let s = free_swarm(3, &mut rng)?;
        let (p, v) = (s.positions(), s.velocities());
        let legs = |t: f64, k: usize| {
            let q: Vec<Vec3> = p.iter().zip(&v).map(|(p, v)| p + t * v).collect();
            if k == 1 { (q[1] - q[0]).norm() } else { (q[1] - q[k]).norm() + (q[k] - q[0]).norm() }
        };
        for k in [1, 2] {
            let fd = (legs(h, k) - legs(-h, k)) / (2.0 * h);
            worst = worst.max(rel(&[radial_velocity(&s, 0, 1, k)?], &[fd]));
        }
        let curve = LissajousParams::random(vec![Vec3::zeros()], &[false], 1000.0, 0.2, &mut rng)?;
        let t = rng.random_range(0.0..50.0);
        let fd = (lissajous_state(&curve, 0, t + h).0 - lissajous_state(&curve, 0, t - h).0) / (2.0 * h);
        worst = worst.max(rel(&flat(&[lissajous_state(&curve, 0, t).1]), &flat(&[fd])));
    }
    Ok(report("time derivatives", worst, 1e-4, true, format!("{count} instances")))
}

/// True when the two maps read the same observation for every reflector, so no
/// likelihood can tell them apart.
pub fn maps_equivalent(lists: &ChannelLists, a: &AssignmentMaps, b: &AssignmentMaps) -> bool {
    let n = lists.n();
    crate::measurement::ordered_pairs(n).all(|(i, j)| {
        (0..n).filter(|&k| k != i).all(|k| lists.list(i, j)[a.get(i, j, k)] == lists.list(i, j)[b.get(i, j, k)])
    })
}

/// Share of `count` five-UAV instances where BP with greedy decoding agrees
/// with the exhaustive maximizer.
pub fn bp_agreement(count: usize, seed: u64, noise: NoiseModel) -> Result<f64> {
    let grid = OtfsGridConfig::default().with_noise(noise);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..count {
        let s = sample_random_swarm(&ScenarioParams { n: 5, ..Default::default() }, &mut rng)?;
        let m = build_measurements(&s, &grid)?;
        let cfg = BpConfig::default();
        let bp = estimate_maps_from_lists(&m.lists, &grid, &cfg)?;
        let ml = brute_force_maps(&m.lists, &grid, cfg.use_doppler_checks)?;
        hits += maps_equivalent(&m.lists, &bp, &ml) as usize;
    }
    Ok(hits as f64 / count as f64)
}

/// Noiseless end-to-end: exact maps, positions and velocities.
pub fn check_noiseless_pipeline(count: usize, seed: u64) -> Result<OracleReport> {
    let grid = OtfsGridConfig::default().with_noise(NoiseModel::Noiseless);
    let cfg = TipConfig { turbo_iterations: 1, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut bad_maps = 0;
    for r in 0..count {
        let s = sample_random_swarm(&ScenarioParams { n: 5 + r % 2, ..Default::default() }, &mut rng)?;
        let m = build_measurements(&s, &grid)?;
        let est = run_cold_start(&m, &AnchorSet::from_swarm(&s), &cfg, &mut rng)?;
        bad_maps += (est.maps != m.truth_maps) as usize;
        for (a, b) in est.positions.iter().zip(s.positions()).chain(est.velocities.iter().zip(s.velocities())) {
            worst = worst.max((a - b).norm());
        }
    }
    let value = if bad_maps > 0 { f64::INFINITY } else { worst };
    Ok(report("noiseless pipeline", value, 1e-4, true, format!("{count} runs, {bad_maps} with wrong maps")))
}

/// Every oracle at its default size.
pub fn run_all(seed: u64) -> Result<Vec<OracleReport>> {
    let exact = bp_agreement(20, seed, NoiseModel::Noiseless)?;
    let quantized = bp_agreement(50, seed, NoiseModel::Quantized)?;
    Ok(vec![
        check_identities(1000, seed)?,
        check_gradient(50, seed)?,
        check_jacobians(50, seed)?,
        check_time_derivatives(50, seed)?,
        report("BP vs exhaustive, noiseless", exact, 1.0, false, "20 instances, N = 5".into()),
        report("BP vs exhaustive, quantized", quantized, 0.9, false, "50 instances, N = 5".into()),
        check_noiseless_pipeline(20, seed)?,
    ])
}
