//! Turbo iterative positioning: alternate map re-estimation and descent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{estimate_maps_from_lists, BpConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::measurement::{ordered_pairs, AssignmentMaps, ChannelLists, MeasurementSet};
use crate::positioning::{e_b, gd_minimize, solve_with_restarts, AnchorSet, GdConfig, InitStrategy, OrderedDistances};
use crate::velocity::{build_design, estimate_velocities, OrderedVelocities};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipMode {
    #[default]
    ColdStart,
    Tracking,
    GenieAided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TipConfig {
    /// Turbo iterations L; the loop performs L + 1 descents.
    pub turbo_iterations: usize,
    pub bp: BpConfig,
    pub gd: GdConfig,
    pub mode: TipMode,
    /// Tracking epoch (s).
    pub dt: f64,
    /// Cold-start draws are i.i.d. `N(init_mean, init_std^2)` per coordinate.
    pub init_mean: f64,
    pub init_std: f64,
    /// Spread of restart draws around the prior in tracking mode (m).
    pub tracking_restart_std: f64,
}

impl Default for TipConfig {
    fn default() -> Self {
        Self {
            turbo_iterations: 2,
            bp: BpConfig::default(),
            gd: GdConfig::default(),
            mode: TipMode::ColdStart,
            dt: 1.0,
            init_mean: 500.0,
            init_std: 1000.0 / 12f64.sqrt(),
            tracking_restart_std: 10.0,
        }
    }
}

impl TipConfig {
    pub fn validate(&self) -> Result<()> {
        self.bp.validate()?;
        self.gd.validate()?;
        if self.mode == TipMode::Tracking && !(self.dt > 0.0) {
            return Err(Error::Config(format!("tracking needs a positive epoch, got {}", self.dt)));
        }
        if !(self.init_std > 0.0 && self.tracking_restart_std > 0.0) {
            return Err(Error::Config("initialization spreads must be positive".into()));
        }
        Ok(())
    }

    fn cold_init(&self) -> InitStrategy {
        InitStrategy::Prior { mean: self.init_mean, std: self.init_std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationDiagnostics {
    pub residual: f64,
    /// Map entries that changed with respect to the previous turbo iteration.
    pub map_changes: usize,
    pub gd_iterations: usize,
    /// Velocity estimate of this iteration (intermediate values are diagnostic only).
    pub velocities: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub positions: Vec<Vec3>,
    /// One entry per UAV; anchors are zero.
    pub velocities: Vec<Vec3>,
    /// Final square error (m^2).
    pub residual: f64,
    pub maps: AssignmentMaps,
    pub iterations: Vec<IterationDiagnostics>,
    /// Number of restarts used before acceptance.
    pub restarts: usize,
    pub velocity_degenerate: bool,
}

impl EstimationResult {
    pub fn gd_iterations(&self) -> usize {
        self.iterations.iter().map(|d| d.gd_iterations).sum()
    }
}

/// Reorders the lists by reflector identity.
pub fn apply_maps(lists: &ChannelLists, maps: &AssignmentMaps) -> (OrderedDistances, OrderedVelocities) {
    let n = lists.n();
    debug_assert!(maps.is_bijective(), "apply_maps needs bijective maps");
    let mut d = OrderedDistances::new(n);
    let mut v = OrderedVelocities::new(n);
    for (i, j) in ordered_pairs(n) {
        for k in (0..n).filter(|&k| k != i) {
            let m = maps.get(i, j, k);
            if k != j {
                d.set(i, j, k, lists.distance(i, j, m));
            }
            v.set(i, j, k, lists.velocity(i, j, m));
        }
    }
    (d, v)
}

/// Maps implied by positions `p`: each link's reflectors sorted by their
/// predicted relative distance, ties broken by id.
pub fn compute_maps(p: &[Vec3]) -> AssignmentMaps {
    let n = p.len();
    let mut maps = AssignmentMaps::unset(n);
    let mut star: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (i, j) in ordered_pairs(n) {
        star.clear();
        for k in (0..n).filter(|&k| k != i) {
            let d = if k == j { 0.0 } else { (p[j] - p[k]).norm() + (p[k] - p[i]).norm() - (p[j] - p[i]).norm() };
            star.push((d, k));
        }
        star.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (m, &(_, k)) in star.iter().enumerate() {
            maps.set(i, j, k, m);
        }
    }
    maps
}

// One pass of the turbo loop from fixed initial maps and start point.
fn turbo_pass(
    lists: &ChannelLists,
    maps0: &AssignmentMaps,
    t0: &[Vec3],
    anchors: &AnchorSet,
    cfg: &TipConfig,
    turbo_iterations: usize,
) -> Result<EstimationResult> {
    let mut maps = maps0.clone();
    let mut p = t0.to_vec();
    let mut iterations = Vec::with_capacity(turbo_iterations + 1);
    let mut velocities = vec![Vec3::zeros(); p.len()];
    let mut degenerate = false;
    let mut residual = f64::INFINITY;
    for l in 0..=turbo_iterations {
        let mut changes = 0;
        if l > 0 {
            let next = compute_maps(&p);
            changes = next.count_differences(&maps);
            maps = next;
        }
        let (delta, omega) = apply_maps(lists, &maps);
        let sol = gd_minimize(&delta, &p, anchors, &cfg.gd)?;
        p = sol.positions;
        residual = sol.error;
        let v = estimate_velocities(&build_design(&p, anchors)?, &omega)?;
        velocities = v.velocities;
        degenerate = v.degenerate;
        iterations.push(IterationDiagnostics { residual, map_changes: changes, gd_iterations: sol.iterations, velocities: velocities.clone() });
    }
    Ok(EstimationResult { positions: p, velocities, residual, maps, iterations, restarts: 0, velocity_degenerate: degenerate })
}

// Restart controller wrapped around the whole turbo loop.
fn with_restarts<R: Rng + ?Sized>(
    meas: &MeasurementSet,
    maps0: &AssignmentMaps,
    first: Option<&[Vec3]>,
    restart: &InitStrategy,
    anchors: &AnchorSet,
    cfg: &TipConfig,
    turbo_iterations: usize,
    rng: &mut R,
) -> Result<EstimationResult> {
    let threshold = cfg.gd.beta * e_b(meas.n(), &meas.grid);
    let mut best: Option<EstimationResult> = None;
    for attempt in 0..=cfg.gd.max_restarts {
        let t0 = match (attempt, first) {
            (0, Some(t)) => {
                let mut t = t.to_vec();
                anchors.clamp(&mut t);
                t
            }
            _ => restart.draw(anchors, rng)?,
        };
        let mut res = turbo_pass(&meas.lists, maps0, &t0, anchors, cfg, turbo_iterations)?;
        res.restarts = attempt;
        if res.residual <= threshold {
            return Ok(res);
        }
        if best.as_ref().is_none_or(|b| res.residual < b.residual) {
            best = Some(res);
        }
    }
    Err(Error::TipFailed { best: Box::new(best.expect("at least one attempt")) })
}

fn check_inputs(meas: &MeasurementSet, anchors: &AnchorSet) -> Result<()> {
    if anchors.len() != meas.n() {
        return Err(Error::Config(format!("anchor set covers {} UAVs, measurements {}", anchors.len(), meas.n())));
    }
    Ok(())
}

/// Cold start: BP maps and a random start, then `L` turbo iterations.
pub fn run_cold_start<R: Rng + ?Sized>(meas: &MeasurementSet, anchors: &AnchorSet, cfg: &TipConfig, rng: &mut R) -> Result<EstimationResult> {
    cfg.validate()?;
    check_inputs(meas, anchors)?;
    let maps0 = estimate_maps_from_lists(&meas.lists, &meas.grid, &cfg.bp)?;
    with_restarts(meas, &maps0, None, &cfg.cold_init(), anchors, cfg, cfg.turbo_iterations, rng)
}

/// Tracking: maps from the prior, descent warm-started at the prior. Returns
/// the estimate and the forecast `p + dt v` for the next epoch.
pub fn run_tracking_step<R: Rng + ?Sized>(
    meas: &MeasurementSet,
    prior: &[Vec3],
    anchors: &AnchorSet,
    cfg: &TipConfig,
    rng: &mut R,
) -> Result<(EstimationResult, Vec<Vec3>)> {
    cfg.validate()?;
    check_inputs(meas, anchors)?;
    if prior.len() != meas.n() {
        return Err(Error::Config(format!("prior has {} positions, expected {}", prior.len(), meas.n())));
    }
    let maps0 = compute_maps(prior);
    let restart = InitStrategy::Around { center: prior.to_vec(), std: cfg.tracking_restart_std };
    let res = with_restarts(meas, &maps0, Some(prior), &restart, anchors, cfg, cfg.turbo_iterations, rng)?;
    let forecast = forecast(&res, cfg.dt);
    Ok((res, forecast))
}

/// `p + dt v` for every UAV.
pub fn forecast(res: &EstimationResult, dt: f64) -> Vec<Vec3> {
    res.positions.iter().zip(&res.velocities).map(|(p, v)| p + dt * v).collect()
}

/// Genie-aided benchmark: true maps, a single descent with restarts.
pub fn run_genie_aided<R: Rng + ?Sized>(meas: &MeasurementSet, anchors: &AnchorSet, cfg: &TipConfig, rng: &mut R) -> Result<EstimationResult> {
    cfg.validate()?;
    check_inputs(meas, anchors)?;
    let maps = meas.truth_maps.clone();
    let (delta, omega) = apply_maps(&meas.lists, &maps);
    let (sol, restarts) = match solve_with_restarts(&delta, anchors, &cfg.gd, &meas.grid, None, &cfg.cold_init(), rng) {
        Ok(ok) => ok,
        Err(Error::RestartsExhausted { best }) => {
            let res = finish_genie(*best, &omega, maps, anchors, cfg.gd.max_restarts)?;
            return Err(Error::TipFailed { best: Box::new(res) });
        }
        Err(e) => return Err(e),
    };
    finish_genie(sol, &omega, maps, anchors, restarts)
}

fn finish_genie(
    sol: crate::positioning::GdSolution,
    omega: &OrderedVelocities,
    maps: AssignmentMaps,
    anchors: &AnchorSet,
    restarts: usize,
) -> Result<EstimationResult> {
    let v = estimate_velocities(&build_design(&sol.positions, anchors)?, omega)?;
    let diag = IterationDiagnostics { residual: sol.error, map_changes: 0, gd_iterations: sol.iterations, velocities: v.velocities.clone() };
    Ok(EstimationResult {
        positions: sol.positions,
        velocities: v.velocities,
        residual: sol.error,
        maps,
        iterations: vec![diag],
        restarts,
        velocity_degenerate: v.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_random_swarm, ScenarioParams, SwarmState};
    use crate::measurement::{build_measurements, NoiseModel, OtfsGridConfig, PathEntry};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn apply_maps_permutes_by_hand() {
        let mut lists = ChannelLists::zeros(3);
        *lists.list_mut(0, 1) = vec![PathEntry { distance: 0.0, velocity: 1.0 }, PathEntry { distance: 40.0, velocity: -2.0 }];
        let mut maps = AssignmentMaps::identity(3);
        let (d, v) = apply_maps(&lists, &maps);
        assert_eq!((d.get(0, 1, 2), v.get(0, 1, 2), v.get(0, 1, 1)), (40.0, -2.0, 1.0));
        // swap: reflector 2 claims the first slot
        maps.set(0, 1, 2, 0);
        maps.set(0, 1, 1, 1);
        let (d, v) = apply_maps(&lists, &maps);
        assert_eq!((d.get(0, 1, 2), v.get(0, 1, 2), v.get(0, 1, 1)), (0.0, 1.0, -2.0));
    }

    #[test]
    fn compute_maps_breaks_ties_by_id() {
        // UAV 0 sits on the segment between 1 and 2, so its echo on (1, 2) ties
        // with the direct path and the lower id takes the first slot
        let p = [Vec3::new(5., 0., 0.), Vec3::new(0., 0., 0.), Vec3::new(10., 0., 0.), Vec3::new(0., 7., 0.)];
        let maps = compute_maps(&p);
        assert_eq!((maps.get(1, 2, 0), maps.get(1, 2, 2)), (0, 1));
        assert_eq!((maps.get(2, 1, 0), maps.get(2, 1, 1)), (0, 1));
        assert_eq!(maps.get(1, 3, 3), 0);
        assert!(maps.is_bijective());
    }

    fn noiseless(seed: u64, n: usize) -> (SwarmState, MeasurementSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_random_swarm(&ScenarioParams { n, ..Default::default() }, &mut rng).unwrap();
        let grid = OtfsGridConfig::default().with_noise(NoiseModel::Noiseless);
        let m = build_measurements(&s, &grid).unwrap();
        (s, m)
    }

    #[test]
    fn compute_maps_at_truth_matches_noiseless_truth() {
        let (s, m) = noiseless(6, 7);
        assert_eq!(compute_maps(&s.positions()), m.truth_maps);
    }

    #[test]
    fn cold_start_is_deterministic_and_keeps_anchors() {
        let (s, m) = noiseless(7, 6);
        let anchors = AnchorSet::from_swarm(&s);
        let cfg = TipConfig { turbo_iterations: 1, ..Default::default() };
        let a = run_cold_start(&m, &anchors, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = run_cold_start(&m, &anchors, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.positions[..4], &s.positions()[..4]);
        assert_eq!(a.iterations.len(), 2);
    }

    #[test]
    fn zero_dt_forecast_is_estimate() {
        let (s, m) = noiseless(9, 6);
        let anchors = AnchorSet::from_swarm(&s);
        let cfg = TipConfig { mode: TipMode::Tracking, ..Default::default() };
        let (res, _) = run_tracking_step(&m, &s.positions(), &anchors, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(forecast(&res, 0.0), res.positions);
    }
}
