//! Synthetic delay-Doppler channel profiles.
//!
//! For every ordered link `(i, j)` the receiver `i` sees one line-of-sight path
//! and one single-bounce echo off every other UAV. Each path is reported as a
//! (relative distance, radial velocity) pair on the OTFS resolution grid; the
//! receiver only knows the pairs sorted by distance, not which UAV produced
//! which echo. The ground-truth association is kept alongside for scoring.

mod format;

pub use format::{read_measurements, write_measurements};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{versor, SwarmState, Vec3, COINCIDENCE_TOL};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// How the delay-Doppler observations are corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Rounding to the delay and Doppler grids.
    #[default]
    Quantized,
    /// Exact values; for oracle tests only.
    Noiseless,
    /// Additive Gaussian noise with the variance of the uniform rounding error.
    Gaussian,
}

impl std::str::FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantized" => Ok(Self::Quantized),
            "noiseless" => Ok(Self::Noiseless),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::Config(format!("unknown noise model {other:?}"))),
        }
    }
}

impl std::fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Quantized => "quantized",
            Self::Noiseless => "noiseless",
            Self::Gaussian => "gaussian",
        })
    }
}

/// OTFS frame parameters and the resolutions they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OtfsGridConfig {
    /// Bandwidth B (Hz).
    pub bandwidth: f64,
    /// Frame duration T_f (s).
    pub frame_duration: f64,
    /// Carrier frequency f_c (Hz).
    pub carrier: f64,
    pub speed_of_light: f64,
    pub noise: NoiseModel,
}

impl Default for OtfsGridConfig {
    fn default() -> Self {
        Self { bandwidth: 30e6, frame_duration: 0.02, carrier: 5e9, speed_of_light: SPEED_OF_LIGHT, noise: NoiseModel::Quantized }
    }
}

impl OtfsGridConfig {
    pub fn new(bandwidth: f64, frame_duration: f64, carrier: f64) -> Result<Self> {
        let g = Self { bandwidth, frame_duration, carrier, ..Default::default() };
        g.validate()?;
        Ok(g)
    }

    /// Uses c = 3e8 m/s, the round value behind the published step sizes.
    pub fn with_round_c(mut self) -> Self {
        self.speed_of_light = 3e8;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.frame_duration > 0.0 && self.carrier > 0.0 && self.speed_of_light > 0.0) {
            return Err(Error::Config(format!("grid parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Distance resolution c/B (m).
    pub fn distance_step(&self) -> f64 {
        self.speed_of_light / self.bandwidth
    }

    /// Radial-velocity resolution c/(f_c T_f) (m/s).
    pub fn velocity_step(&self) -> f64 {
        self.speed_of_light / (self.carrier * self.frame_duration)
    }

    /// Standard deviation of the uniform distance rounding error, c/(sqrt(12) B).
    pub fn distance_sigma(&self) -> f64 {
        self.distance_step() / 12f64.sqrt()
    }

    pub fn velocity_sigma(&self) -> f64 {
        self.velocity_step() / 12f64.sqrt()
    }
}

/// One resolved path in a channel profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    /// Relative echo distance (m).
    pub distance: f64,
    /// Radial velocity (m/s).
    pub velocity: f64,
}

/// Sorted channel profiles for all ordered pairs `(i, j)`, `i != j`.
///
/// Entry 0 of every list is the line-of-sight slot (list index 1 in one-based
/// notation); the remaining `N - 2` entries are echoes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLists {
    n: usize,
    lists: Vec<Vec<PathEntry>>,
}

impl ChannelLists {
    /// Empty lists (all zeros) for `n` UAVs.
    pub fn zeros(n: usize) -> Self {
        let mut lists = vec![Vec::new(); n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    lists[i * n + j] = vec![PathEntry { distance: 0.0, velocity: 0.0 }; n - 1];
                }
            }
        }
        Self { n, lists }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn list(&self, i: usize, j: usize) -> &[PathEntry] {
        &self.lists[i * self.n + j]
    }

    pub fn list_mut(&mut self, i: usize, j: usize) -> &mut Vec<PathEntry> {
        &mut self.lists[i * self.n + j]
    }

    pub fn distance(&self, i: usize, j: usize, m: usize) -> f64 {
        self.lists[i * self.n + j][m].distance
    }

    pub fn velocity(&self, i: usize, j: usize, m: usize) -> f64 {
        self.lists[i * self.n + j][m].velocity
    }

    /// Checks list lengths and ordering.
    pub fn validate(&self) -> Result<()> {
        for (i, j) in ordered_pairs(self.n) {
            let l = self.list(i, j);
            if l.len() != self.n - 1 {
                return Err(Error::Config(format!("list ({i},{j}) has {} entries, expected {}", l.len(), self.n - 1)));
            }
            if l.iter().any(|e| !(e.distance.is_finite() && e.velocity.is_finite())) {
                return Err(Error::Config(format!("list ({i},{j}) has a non-finite entry")));
            }
            if l.windows(2).any(|w| w[0].distance > w[1].distance) {
                return Err(Error::Config(format!("list ({i},{j}) is not sorted by distance")));
            }
        }
        Ok(())
    }
}

/// Iterator over ordered pairs `(i, j)` with `i != j`.
pub fn ordered_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
}

/// Per-link bijections from reflector identity `k != i` to list index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMaps {
    n: usize,
    // [i][j][k] -> list index; usize::MAX where undefined
    index: Vec<usize>,
}

pub(crate) const UNSET: usize = usize::MAX;

impl AssignmentMaps {
    pub fn unset(n: usize) -> Self {
        Self { n, index: vec![UNSET; n * n * n] }
    }

    /// Maps with line-of-sight at index 0 and the echoes in ascending id order.
    pub fn identity(n: usize) -> Self {
        let mut maps = Self::unset(n);
        for (i, j) in ordered_pairs(n) {
            maps.set(i, j, j, 0);
            let mut m = 1;
            for k in 0..n {
                if k != i && k != j {
                    maps.set(i, j, k, m);
                    m += 1;
                }
            }
        }
        maps
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// List index that reflector `k` occupies on link `(i, j)`.
    pub fn get(&self, i: usize, j: usize, k: usize) -> usize {
        self.index[(i * self.n + j) * self.n + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, m: usize) {
        self.index[(i * self.n + j) * self.n + k] = m;
    }

    /// Reflector at list index `m` on link `(i, j)`, if any.
    pub fn reflector_at(&self, i: usize, j: usize, m: usize) -> Option<usize> {
        (0..self.n).find(|&k| k != i && self.get(i, j, k) == m)
    }

    pub fn is_bijective(&self) -> bool {
        ordered_pairs(self.n).all(|(i, j)| self.pair_is_bijective(i, j))
    }

    pub fn pair_is_bijective(&self, i: usize, j: usize) -> bool {
        let mut seen = vec![false; self.n - 1];
        for k in (0..self.n).filter(|&k| k != i) {
            let m = self.get(i, j, k);
            if m >= self.n - 1 || seen[m] {
                return false;
            }
            seen[m] = true;
        }
        true
    }

    /// Number of `(i, j, k)` entries that differ from `other`.
    pub fn count_differences(&self, other: &Self) -> usize {
        ordered_pairs(self.n)
            .flat_map(|(i, j)| (0..self.n).filter(move |&k| k != i).map(move |k| (i, j, k)))
            .filter(|&(i, j, k)| self.get(i, j, k) != other.get(i, j, k))
            .count()
    }
}

/// Lists, ground-truth maps and the grid they were produced on.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub lists: ChannelLists,
    pub truth_maps: AssignmentMaps,
    pub grid: OtfsGridConfig,
}

impl MeasurementSet {
    pub fn n(&self) -> usize {
        self.lists.n()
    }
}

/// Excess path length of the echo off `k` on link `(i, j)`:
/// `|p_j - p_k| + |p_k - p_i| - |p_i - p_j|`.
pub fn red_distance(p_i: &Vec3, p_j: &Vec3, p_k: &Vec3) -> Result<f64> {
    let (a, b, c) = ((p_j - p_k).norm(), (p_k - p_i).norm(), (p_i - p_j).norm());
    if a <= COINCIDENCE_TOL || b <= COINCIDENCE_TOL || c <= COINCIDENCE_TOL {
        return Err(Error::Domain("coincident points in relative echo distance".into()));
    }
    // the triangle inequality holds exactly; clamp rounding noise
    Ok((a + b - c).max(0.0))
}

/// Radial velocity seen by `i` on the path from `j` bouncing off `k`: the rate
/// of change of `|p_j - p_k| + |p_k - p_i|`. For `k == j` this is the
/// direct-path rate `(v_j - v_i) . u_{j,i}`.
pub fn radial_velocity(swarm: &SwarmState, i: usize, j: usize, k: usize) -> Result<f64> {
    let u = swarm.uavs();
    radial_velocity_raw(&u[i].position, &u[j].position, &u[k].position, &u[i].velocity, &u[j].velocity, &u[k].velocity, j == k)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn radial_velocity_raw(
    p_i: &Vec3,
    p_j: &Vec3,
    p_k: &Vec3,
    v_i: &Vec3,
    v_j: &Vec3,
    v_k: &Vec3,
    line_of_sight: bool,
) -> Result<f64> {
    let err = || Error::Domain("coincident points in radial velocity".into());
    if line_of_sight {
        let u_ji = versor(p_j, p_i).ok_or_else(err)?;
        return Ok((v_j - v_i).dot(&u_ji));
    }
    let u_jk = versor(p_j, p_k).ok_or_else(err)?;
    let u_ki = versor(p_k, p_i).ok_or_else(err)?;
    if (p_i - p_j).norm() <= COINCIDENCE_TOL {
        return Err(err());
    }
    Ok((v_j - v_k).dot(&u_jk) + (v_k - v_i).dot(&u_ki))
}

/// Nearest multiple of `step`, ties rounded away from zero.
pub fn quantize(value: f64, step: f64) -> f64 {
    debug_assert!(step > 0.0);
    (value / step).round() * step
}

/// Exact relative distances and radial velocities `[i][j][k]` (NaN for `k == i`).
#[derive(Debug, Clone)]
pub struct TrueObservations {
    pub n: usize,
    pub distance: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl TrueObservations {
    pub fn compute(swarm: &SwarmState) -> Result<Self> {
        let n = swarm.len();
        let mut distance = vec![f64::NAN; n * n * n];
        let mut velocity = vec![f64::NAN; n * n * n];
        let u = swarm.uavs();
        for (i, j) in ordered_pairs(n) {
            for k in (0..n).filter(|&k| k != i) {
                let idx = (i * n + j) * n + k;
                distance[idx] = if k == j { 0.0 } else { red_distance(&u[i].position, &u[j].position, &u[k].position)? };
                velocity[idx] = radial_velocity(swarm, i, j, k)?;
            }
        }
        Ok(Self { n, distance, velocity })
    }

    pub fn distance(&self, i: usize, j: usize, k: usize) -> f64 {
        self.distance[(i * self.n + j) * self.n + k]
    }

    pub fn velocity(&self, i: usize, j: usize, k: usize) -> f64 {
        self.velocity[(i * self.n + j) * self.n + k]
    }
}

/// Builds the sorted channel lists for a swarm. Quantized and noiseless models
/// are deterministic; the Gaussian model draws from `rng`.
///
/// Within a list, entries are ordered by observed distance, then observed
/// velocity, then reflector id. A reflector whose echo rounds to zero distance
/// can therefore land in the line-of-sight slot. Under Gaussian noise an echo
/// close to the direct path may come out negative and sort ahead of it.
pub fn build_measurements_with<R: Rng + ?Sized>(
    swarm: &SwarmState,
    grid: &OtfsGridConfig,
    rng: &mut R,
) -> Result<MeasurementSet> {
    grid.validate()?;
    let n = swarm.len();
    if n < 3 {
        return Err(Error::Config(format!("need at least 3 UAVs, have {n}")));
    }
    let truth = TrueObservations::compute(swarm)?;
    let (ds, vs) = (grid.distance_step(), grid.velocity_step());
    let dn = Normal::new(0.0, grid.distance_sigma()).map_err(|e| Error::Config(e.to_string()))?;
    let vn = Normal::new(0.0, grid.velocity_sigma()).map_err(|e| Error::Config(e.to_string()))?;

    let mut lists = ChannelLists::zeros(n);
    let mut maps = AssignmentMaps::unset(n);
    for (i, j) in ordered_pairs(n) {
        let mut entries: Vec<(f64, f64, usize)> = Vec::with_capacity(n - 1);
        for k in (0..n).filter(|&k| k != i) {
            let (d, v) = (truth.distance(i, j, k), truth.velocity(i, j, k));
            let (d, v) = match grid.noise {
                NoiseModel::Quantized => (quantize(d, ds), quantize(v, vs)),
                NoiseModel::Noiseless => (d, v),
                // the line-of-sight delay is the zero reference and carries no error
                NoiseModel::Gaussian if k == j => (d, v + vn.sample(rng)),
                NoiseModel::Gaussian => (d + dn.sample(rng), v + vn.sample(rng)),
            };
            entries.push((d, v, k));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let list = lists.list_mut(i, j);
        for (m, &(d, v, k)) in entries.iter().enumerate() {
            list[m] = PathEntry { distance: d, velocity: v };
            maps.set(i, j, k, m);
        }
    }
    Ok(MeasurementSet { lists, truth_maps: maps, grid: *grid })
}

/// Deterministic variant for the quantized and noiseless models.
pub fn build_measurements(swarm: &SwarmState, grid: &OtfsGridConfig) -> Result<MeasurementSet> {
    if grid.noise == NoiseModel::Gaussian {
        return Err(Error::Config("Gaussian noise needs a random generator; use build_measurements_with".into()));
    }
    build_measurements_with(swarm, grid, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_random_swarm, ScenarioParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn red_distance_examples() {
        assert_eq!(red_distance(&v(0., 0., 0.), &v(2., 0., 0.), &v(1., 0., 0.)).unwrap(), 0.0);
        assert_eq!(red_distance(&v(0., 0., 0.), &v(3., 0., 0.), &v(0., 4., 0.)).unwrap(), 6.0);
        assert_eq!(red_distance(&v(3., 0., 0.), &v(0., 0., 0.), &v(0., 4., 0.)).unwrap(), 6.0);
        assert!(matches!(red_distance(&v(0., 0., 0.), &v(0., 0., 0.), &v(0., 4., 0.)), Err(Error::Domain(_))));
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0, 7.3), 0.0);
        assert_eq!(quantize(12.4, 10.0), 10.0);
        assert_eq!(quantize(17.6, 10.0), 20.0);
        assert_eq!(quantize(15.0, 10.0), 20.0);
        assert_eq!(quantize(-15.0, 10.0), -20.0);
    }

    #[test]
    fn published_step_sizes() {
        let g = OtfsGridConfig::new(30e6, 0.02, 5e9).unwrap().with_round_c();
        assert!((g.distance_step() - 10.0).abs() < 1e-12);
        assert!((g.velocity_step() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn radial_velocity_vanishes_for_rigid_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sample_random_swarm(&ScenarioParams { n: 6, anchor_positions: vec![], ..Default::default() }, &mut rng).unwrap();
        let p = s.positions();
        let still = SwarmState::from_arrays(&p, &vec![Vec3::zeros(); 6], 0).unwrap();
        let moving = SwarmState::from_arrays(&p, &vec![v(3., -2., 7.); 6], 0).unwrap();
        for (i, j, k) in [(0, 1, 2), (3, 4, 4), (5, 0, 1)] {
            assert_eq!(radial_velocity(&still, i, j, k).unwrap(), 0.0);
            assert!(radial_velocity(&moving, i, j, k).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn three_uav_lists_have_two_entries() {
        let s = SwarmState::from_arrays(&[v(0., 0., 0.), v(100., 0., 0.), v(0., 50., 20.)], &[Vec3::zeros(); 3], 0).unwrap();
        let m = build_measurements(&s, &OtfsGridConfig::default()).unwrap();
        for (i, j) in ordered_pairs(3) {
            assert_eq!(m.lists.list(i, j).len(), 2);
            assert_eq!(m.lists.distance(i, j, 0), 0.0);
        }
        assert!(m.truth_maps.is_bijective());
    }

    #[test]
    fn noiseless_truth_maps_recover_exact_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = sample_random_swarm(&ScenarioParams { n: 6, ..Default::default() }, &mut rng).unwrap();
        let grid = OtfsGridConfig::default().with_noise(NoiseModel::Noiseless);
        let m = build_measurements(&s, &grid).unwrap();
        let t = TrueObservations::compute(&s).unwrap();
        for (i, j) in ordered_pairs(6) {
            for k in (0..6).filter(|&k| k != i) {
                let idx = m.truth_maps.get(i, j, k);
                assert_eq!(m.lists.distance(i, j, idx), t.distance(i, j, k));
                assert_eq!(m.lists.velocity(i, j, idx), t.velocity(i, j, k));
            }
            assert_eq!(m.truth_maps.get(i, j, j), 0);
        }
    }

    #[test]
    fn gaussian_model_requires_rng() {
        let s = SwarmState::from_arrays(&[v(0., 0., 0.), v(100., 0., 0.), v(0., 50., 20.)], &[Vec3::zeros(); 3], 0).unwrap();
        let g = OtfsGridConfig::default().with_noise(NoiseModel::Gaussian);
        assert!(build_measurements(&s, &g).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = build_measurements_with(&s, &g, &mut rng).unwrap();
        m.lists.validate().unwrap();
    }
}
