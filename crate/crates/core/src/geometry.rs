//! Swarm state, scenario sampling, Lissajous trajectories and trace ingestion.
//!
//! UAVs are indexed `0..N` by their position in the swarm; anchors occupy the
//! first `A` slots in every generated scenario.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3xX, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position (m) or velocity (m/s) in the common Cartesian frame.
pub type Vec3 = Vector3<f64>;

/// Two positions closer than this are treated as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-9;

/// Unit vector pointing from `from` to `to`. Returns `None` for coincident points.
pub fn versor(to: &Vec3, from: &Vec3) -> Option<Vec3> {
    let d = to - from;
    let r = d.norm();
    (r > COINCIDENCE_TOL).then(|| d / r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: usize,
    pub position: Vec3,
    pub velocity: Vec3,
    pub is_anchor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    uavs: Vec<UavState>,
}

impl SwarmState {
    /// Builds a swarm, checking that every coordinate is finite and that no two
    /// UAVs share a position. Ids are reassigned to match slot order.
    pub fn new(mut uavs: Vec<UavState>) -> Result<Self> {
        for (slot, u) in uavs.iter_mut().enumerate() {
            u.id = slot;
            if !(u.position.iter().all(|x| x.is_finite()) && u.velocity.iter().all(|x| x.is_finite())) {
                return Err(Error::Config(format!("UAV {slot} has a non-finite coordinate")));
            }
        }
        for a in 0..uavs.len() {
            for b in a + 1..uavs.len() {
                if (uavs[a].position - uavs[b].position).norm() <= COINCIDENCE_TOL {
                    return Err(Error::Domain(format!("UAVs {a} and {b} share a position")));
                }
            }
        }
        Ok(Self { uavs })
    }

    /// Swarm from position and velocity arrays; the first `anchors` UAVs are anchors.
    pub fn from_arrays(positions: &[Vec3], velocities: &[Vec3], anchors: usize) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::Config("position and velocity counts differ".into()));
        }
        let uavs = positions
            .iter()
            .zip(velocities)
            .enumerate()
            .map(|(id, (p, v))| UavState { id, position: *p, velocity: *v, is_anchor: id < anchors })
            .collect();
        Self::new(uavs)
    }

    pub fn len(&self) -> usize {
        self.uavs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uavs.is_empty()
    }

    pub fn uavs(&self) -> &[UavState] {
        &self.uavs
    }

    pub fn anchor_count(&self) -> usize {
        self.uavs.iter().filter(|u| u.is_anchor).count()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.uavs.iter().map(|u| u.position).collect()
    }

    pub fn velocities(&self) -> Vec<Vec3> {
        self.uavs.iter().map(|u| u.velocity).collect()
    }

    pub fn anchor_mask(&self) -> Vec<bool> {
        self.uavs.iter().map(|u| u.is_anchor).collect()
    }

    /// Checks the conditions under which positions are identifiable: at least
    /// one non-anchor and at least four non-coplanar anchors.
    pub fn require_estimable(&self) -> Result<()> {
        let a = self.anchor_count();
        if a < 4 {
            return Err(Error::Config(format!("need at least 4 anchors, have {a}")));
        }
        if self.len() <= a {
            return Err(Error::Config("no non-anchor UAV to estimate".into()));
        }
        let anchors: Vec<Vec3> = self.uavs.iter().filter(|u| u.is_anchor).map(|u| u.position).collect();
        if is_coplanar(&anchors) {
            return Err(Error::Config("anchors are coplanar".into()));
        }
        Ok(())
    }
}

/// True when the points do not span three dimensions (relative tolerance 1e-9).
pub fn is_coplanar(points: &[Vec3]) -> bool {
    if points.len() < 4 {
        return true;
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let m = Matrix3xX::from_columns(&points.iter().map(|p| p - centroid).collect::<Vec<_>>());
    let sv = m.svd(false, false).singular_values;
    let max = sv.max();
    max == 0.0 || sv.min() <= 1e-9 * max
}

/// Parameters of the Gaussian scenario prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub n: usize,
    pub pos_mean: f64,
    pub pos_std: f64,
    pub vel_std: f64,
    pub anchor_positions: Vec<Vec3>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n: 8,
            pos_mean: 500.0,
            pos_std: 1000.0 / 12f64.sqrt(),
            vel_std: 10.0,
            anchor_positions: default_anchors(),
        }
    }
}

impl ScenarioParams {
    pub fn anchor_count(&self) -> usize {
        self.anchor_positions.len()
    }
}

/// Anchors at the origin and one kilometre along each axis.
pub fn default_anchors() -> Vec<Vec3> {
    vec![
        Vec3::zeros(),
        Vec3::new(1000.0, 0.0, 0.0),
        Vec3::new(0.0, 1000.0, 0.0),
        Vec3::new(0.0, 0.0, 1000.0),
    ]
}

/// Draws a swarm: anchors at the configured positions with zero velocity,
/// every other coordinate i.i.d. Gaussian.
pub fn sample_random_swarm<R: Rng + ?Sized>(params: &ScenarioParams, rng: &mut R) -> Result<SwarmState> {
    let a = params.anchor_count();
    if a > params.n {
        return Err(Error::Config(format!("{a} anchors exceed swarm size {}", params.n)));
    }
    if a > 0 && is_coplanar(&params.anchor_positions) {
        return Err(Error::Config("anchors are coplanar".into()));
    }
    if !(params.pos_std >= 0.0 && params.vel_std >= 0.0) {
        return Err(Error::Config("standard deviations must be non-negative".into()));
    }
    let pos = Normal::new(params.pos_mean, params.pos_std).map_err(|e| Error::Config(e.to_string()))?;
    let vel = Normal::new(0.0, params.vel_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut uavs = Vec::with_capacity(params.n);
    for id in 0..params.n {
        if id < a {
            uavs.push(UavState { id, position: params.anchor_positions[id], velocity: Vec3::zeros(), is_anchor: true });
        } else {
            let position = Vec3::new(pos.sample(rng), pos.sample(rng), pos.sample(rng));
            let velocity = Vec3::new(vel.sample(rng), vel.sample(rng), vel.sample(rng));
            uavs.push(UavState { id, position, velocity, is_anchor: false });
        }
    }
    SwarmState::new(uavs)
}

/// One axis of a Lissajous trajectory: `amplitude * sin(rate * t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisMotion {
    pub amplitude: f64,
    pub rate: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LissajousParams {
    /// Per-UAV offset added to the sine law (zero reproduces the bare curve).
    pub centers: Vec<Vec3>,
    pub axes: Vec<[AxisMotion; 3]>,
}

impl LissajousParams {
    /// Random curves with amplitudes from U[0, amplitude_max], rates from
    /// U[0, rate_max] and phases from U[0, 2pi]. UAVs flagged in `fixed` get zero
    /// amplitude and stay at their center.
    pub fn random<R: Rng + ?Sized>(
        centers: Vec<Vec3>,
        fixed: &[bool],
        amplitude_max: f64,
        rate_max: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if amplitude_max < 0.0 || rate_max < 0.0 {
            return Err(Error::Config("Lissajous ranges must be non-negative".into()));
        }
        let amp = Uniform::new_inclusive(0.0, amplitude_max).map_err(|e| Error::Config(e.to_string()))?;
        let rate = Uniform::new_inclusive(0.0, rate_max).map_err(|e| Error::Config(e.to_string()))?;
        let phase = Uniform::new(0.0, std::f64::consts::TAU).map_err(|e| Error::Config(e.to_string()))?;
        let axes = (0..centers.len())
            .map(|i| {
                std::array::from_fn(|_| {
                    let m = AxisMotion { amplitude: amp.sample(rng), rate: rate.sample(rng), phase: phase.sample(rng) };
                    if fixed.get(i).copied().unwrap_or(false) {
                        AxisMotion { amplitude: 0.0, ..m }
                    } else {
                        m
                    }
                })
            })
            .collect();
        Ok(Self { centers, axes })
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    /// Snapshot of the whole swarm at time `t`; the first `anchors` UAVs are anchors.
    pub fn swarm_at(&self, t: f64, anchors: usize) -> Result<SwarmState> {
        let (p, v): (Vec<Vec3>, Vec<Vec3>) = (0..self.len()).map(|i| lissajous_state(self, i, t)).unzip();
        SwarmState::from_arrays(&p, &v, anchors)
    }
}

/// Position and analytic velocity of UAV `i` at time `t`.
pub fn lissajous_state(params: &LissajousParams, i: usize, t: f64) -> (Vec3, Vec3) {
    let mut p = params.centers[i];
    let mut v = Vec3::zeros();
    for (s, m) in params.axes[i].iter().enumerate() {
        let arg = m.rate * t + m.phase;
        p[s] += m.amplitude * arg.sin();
        v[s] = m.amplitude * m.rate * arg.cos();
    }
    (p, v)
}

/// One time slice of a recorded trace, UAVs ordered by ascending trace id.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSnapshot {
    pub time: f64,
    pub ids: Vec<i64>,
    pub positions: Vec<Vec3>,
    /// Finite-difference velocities along the trace (zero for a single snapshot).
    pub velocities: Vec<Vec3>,
}

impl TraceSnapshot {
    /// Swarm made of the given anchors (zero velocity) followed by the first
    /// `mobile` trace UAVs.
    pub fn to_swarm(&self, anchor_positions: &[Vec3], mobile: usize) -> Result<SwarmState> {
        if mobile > self.positions.len() {
            return Err(Error::Config(format!(
                "trace snapshot at t={} has {} UAVs, {mobile} requested",
                self.time,
                self.positions.len()
            )));
        }
        let mut p: Vec<Vec3> = anchor_positions.to_vec();
        let mut v = vec![Vec3::zeros(); anchor_positions.len()];
        p.extend_from_slice(&self.positions[..mobile]);
        v.extend_from_slice(&self.velocities[..mobile]);
        SwarmState::from_arrays(&p, &v, anchor_positions.len())
    }
}

/// Reads a `t,id,x,y,z` trace and maps all points into the cube of side
/// `cube_side` centered at `cube_center` with a single similarity transform
/// (one scale factor, one translation). Snapshots missing any of the trace's
/// ids are dropped; at least `min_uavs` distinct ids are required.
pub fn load_trace(path: &Path, cube_side: f64, cube_center: Vec3, min_uavs: usize) -> Result<Vec<TraceSnapshot>> {
    let text = std::fs::read_to_string(path)?;
    parse_trace(&text, cube_side, cube_center, min_uavs)
}

pub fn parse_trace(text: &str, cube_side: f64, cube_center: Vec3, min_uavs: usize) -> Result<Vec<TraceSnapshot>> {
    if !(cube_side > 0.0) {
        return Err(Error::Config("cube side must be positive".into()));
    }
    // time bits -> (id -> position)
    let mut slices: BTreeMap<OrdF64, BTreeMap<i64, Vec3>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        // a header row is tolerated on the first line only
        if lineno == 0 && fields[0].parse::<f64>().is_err() {
            continue;
        }
        if fields.len() != 5 {
            return Err(Error::Parse { line: lineno + 1, message: format!("expected 5 fields, found {}", fields.len()) });
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = fields[k]
                .parse()
                .map_err(|_| Error::Parse { line: lineno + 1, message: format!("bad number {:?}", fields[k]) })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse { line: lineno + 1, message: "non-finite value".into() })
            }
        };
        let t = num(0)?;
        let id: i64 = fields[1]
            .parse()
            .map_err(|_| Error::Parse { line: lineno + 1, message: format!("bad UAV id {:?}", fields[1]) })?;
        let p = Vec3::new(num(2)?, num(3)?, num(4)?);
        slices.entry(OrdF64(t)).or_default().insert(id, p);
    }

    let all_ids: std::collections::BTreeSet<i64> = slices.values().flat_map(|m| m.keys().copied()).collect();
    if all_ids.len() < min_uavs {
        return Err(Error::Config(format!("trace has {} distinct UAV ids, need {min_uavs}", all_ids.len())));
    }
    let complete: Vec<(f64, Vec<Vec3>)> = slices
        .into_iter()
        .filter(|(_, m)| m.len() == all_ids.len())
        .map(|(t, m)| (t.0, m.into_values().collect()))
        .collect();
    if complete.is_empty() {
        return Err(Error::Config("no time slice contains every UAV id".into()));
    }

    let (lo, hi) = complete.iter().flat_map(|(_, ps)| ps.iter()).fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let extent = (hi - lo).max();
    let scale = if extent > 0.0 { cube_side / extent } else { 0.0 };
    let mid = (lo + hi) / 2.0;
    let map = |p: &Vec3| cube_center + (p - mid) * scale;

    let ids: Vec<i64> = all_ids.into_iter().collect();
    let mapped: Vec<(f64, Vec<Vec3>)> = complete.iter().map(|(t, ps)| (*t, ps.iter().map(map).collect())).collect();
    let mut out = Vec::with_capacity(mapped.len());
    for (k, (t, ps)) in mapped.iter().enumerate() {
        let velocities = if mapped.len() < 2 {
            vec![Vec3::zeros(); ps.len()]
        } else {
            let (a, b) = if k == 0 {
                (0, 1)
            } else if k + 1 == mapped.len() {
                (k - 1, k)
            } else {
                (k - 1, k + 1)
            };
            let dt = mapped[b].0 - mapped[a].0;
            mapped[a].1.iter().zip(&mapped[b].1).map(|(pa, pb)| (pb - pa) / dt).collect()
        };
        out.push(TraceSnapshot { time: *t, ids: ids.clone(), positions: ps.clone(), velocities });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
