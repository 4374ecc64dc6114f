//! Joint Cramér-Rao bound on non-anchor positions and velocities.
//!
//! The Fisher matrix combines the relative-distance and Doppler sensitivities,
//! averaged over the scenario prior by Monte-Carlo, with the Gaussian prior
//! information on positions and velocities. Rounding errors are replaced by
//! Gaussians of the same variance, since a uniform density has no finite
//! Fisher information.

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_random_swarm, versor, ScenarioParams, Vec3};
use crate::measurement::OtfsGridConfig;
use crate::positioning::{echo_triples, AnchorSet};
use crate::velocity::{observation_triples, velocity_coefficients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrlbConfig {
    /// Monte-Carlo draws R_F.
    pub samples: usize,
    /// Include the Gaussian prior terms `C_p I` and `C_v I`.
    pub use_prior: bool,
}

impl Default for CrlbConfig {
    fn default() -> Self {
        Self { samples: 200, use_prior: true }
    }
}

/// Noise and prior coefficients `C_x = 1 / sigma_x^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherCoefficients {
    pub eta: f64,
    pub zeta: f64,
    pub p: f64,
    pub v: f64,
}

impl FisherCoefficients {
    pub fn new(grid: &OtfsGridConfig, scenario: &ScenarioParams, use_prior: bool) -> Self {
        let inv = |s: f64| 1.0 / (s * s);
        Self {
            eta: inv(grid.distance_sigma()),
            zeta: inv(grid.velocity_sigma()),
            p: if use_prior { inv(scenario.pos_std) } else { 0.0 },
            v: if use_prior { inv(scenario.vel_std) } else { 0.0 },
        }
    }
}

fn slots(anchors: &AnchorSet) -> Vec<Option<usize>> {
    let mut next = 0;
    (0..anchors.len())
        .map(|i| {
            (!anchors.is_anchor(i)).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn add_block(out: &mut DVector<f64>, slot: Option<usize>, b: &Vec3) {
    if let Some(s) = slot {
        for a in 0..3 {
            out[3 * s + a] += b[a];
        }
    }
}

fn unit(p: &[Vec3], a: usize, b: usize) -> Result<Vec3> {
    versor(&p[a], &p[b]).ok_or_else(|| Error::Domain(format!("UAVs {a} and {b} coincide")))
}

/// Gradient of `delta_ijk` with respect to the stacked non-anchor positions.
pub fn delta_position_jacobian(p: &[Vec3], anchors: &AnchorSet, i: usize, j: usize, k: usize) -> Result<DVector<f64>> {
    let s = slots(anchors);
    let mut out = DVector::zeros(3 * anchors.mobile().count());
    add_block(&mut out, s[i], &(unit(p, i, k)? - unit(p, i, j)?));
    add_block(&mut out, s[j], &(unit(p, j, k)? - unit(p, j, i)?));
    add_block(&mut out, s[k], &(unit(p, k, i)? + unit(p, k, j)?));
    Ok(out)
}

// d/dp_a of (x . u_ab) where u_ab = (p_a - p_b) / |p_a - p_b|
fn versor_projection_grad(p: &[Vec3], a: usize, b: usize, x: &Vec3) -> Result<Vec3> {
    let u = unit(p, a, b)?;
    let r = (p[a] - p[b]).norm();
    Ok((Matrix3::identity() - u * u.transpose()) * x / r)
}

/// Gradients of `omega_ijk` with respect to the stacked non-anchor positions
/// and velocities. `k == j` is the line-of-sight term.
pub fn omega_jacobians(p: &[Vec3], v: &[Vec3], anchors: &AnchorSet, i: usize, j: usize, k: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let s = slots(anchors);
    let dim = 3 * anchors.mobile().count();
    let mut dp = DVector::zeros(dim);
    let mut dv = DVector::zeros(dim);
    if k == j {
        let g = versor_projection_grad(p, j, i, &(v[j] - v[i]))?;
        add_block(&mut dp, s[j], &g);
        add_block(&mut dp, s[i], &-g);
    } else {
        let g1 = versor_projection_grad(p, j, k, &(v[j] - v[k]))?;
        add_block(&mut dp, s[j], &g1);
        add_block(&mut dp, s[k], &-g1);
        let g2 = versor_projection_grad(p, k, i, &(v[k] - v[i]))?;
        add_block(&mut dp, s[k], &g2);
        add_block(&mut dp, s[i], &-g2);
    }
    for (who, c) in velocity_coefficients(p, i, j, k)? {
        add_block(&mut dv, s[who], &c);
    }
    Ok((dp, dv))
}

/// Prior-averaged sensitivity sums for one scenario draw.
#[derive(Debug, Clone)]
struct Sensitivity {
    dpp: DMatrix<f64>,
    vpp: DMatrix<f64>,
    vpv: DMatrix<f64>,
    vvv: DMatrix<f64>,
}

fn sensitivity(p: &[Vec3], v: &[Vec3], anchors: &AnchorSet) -> Result<Sensitivity> {
    let n = p.len();
    let dim = 3 * anchors.mobile().count();
    let mut s = Sensitivity {
        dpp: DMatrix::zeros(dim, dim),
        vpp: DMatrix::zeros(dim, dim),
        vpv: DMatrix::zeros(dim, dim),
        vvv: DMatrix::zeros(dim, dim),
    };
    for (i, j, k) in echo_triples(n) {
        let g = delta_position_jacobian(p, anchors, i, j, k)?;
        s.dpp.ger(1.0, &g, &g, 1.0);
    }
    for (i, j, k) in observation_triples(n) {
        let (gp, gv) = omega_jacobians(p, v, anchors, i, j, k)?;
        s.vpp.ger(1.0, &gp, &gp, 1.0);
        s.vpv.ger(1.0, &gp, &gv, 1.0);
        s.vvv.ger(1.0, &gv, &gv, 1.0);
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    /// Number of non-anchor UAVs.
    pub mobile: usize,
    pub samples: usize,
    /// Standard error of the trace estimate, relative to the trace.
    pub relative_std_error: f64,
}

/// Monte-Carlo Fisher matrix over `cfg.samples` draws from `scenario`.
pub fn fisher_matrix<R: Rng + ?Sized>(cfg: &CrlbConfig, grid: &OtfsGridConfig, scenario: &ScenarioParams, rng: &mut R) -> Result<FisherMatrix> {
    if cfg.samples == 0 {
        return Err(Error::Config("CRLB needs at least one Monte-Carlo draw".into()));
    }
    grid.validate()?;
    let swarms = (0..cfg.samples).map(|_| sample_random_swarm(scenario, rng)).collect::<Result<Vec<_>>>()?;
    let anchors = AnchorSet::from_swarm(&swarms[0]);
    let mobile = anchors.mobile().count();
    if mobile == 0 {
        return Err(Error::Config("no non-anchor UAVs to bound".into()));
    }
    let coeff = FisherCoefficients::new(grid, scenario, cfg.use_prior);
    let per_draw: Vec<Sensitivity> =
        swarms.par_iter().map(|s| sensitivity(&s.positions(), &s.velocities(), &anchors)).collect::<Result<Vec<_>>>()?;

    let dim = 3 * mobile;
    let r = cfg.samples as f64;
    let mut mean = Sensitivity { dpp: DMatrix::zeros(dim, dim), vpp: DMatrix::zeros(dim, dim), vpv: DMatrix::zeros(dim, dim), vvv: DMatrix::zeros(dim, dim) };
    let mut traces = Vec::with_capacity(per_draw.len());
    for s in &per_draw {
        mean.dpp += &s.dpp / r;
        mean.vpp += &s.vpp / r;
        mean.vpv += &s.vpv / r;
        mean.vvv += &s.vvv / r;
        traces.push(coeff.eta * s.dpp.trace() + coeff.zeta * (s.vpp.trace() + s.vvv.trace()));
    }
    let tm = traces.iter().sum::<f64>() / r;
    let var = if traces.len() > 1 { traces.iter().map(|t| (t - tm).powi(2)).sum::<f64>() / (r - 1.0) } else { 0.0 };

    let mut f = DMatrix::zeros(2 * dim, 2 * dim);
    let pp = &mean.dpp * coeff.eta + &mean.vpp * coeff.zeta + DMatrix::identity(dim, dim) * coeff.p;
    let pv = &mean.vpv * coeff.zeta;
    let vv = &mean.vvv * coeff.zeta + DMatrix::identity(dim, dim) * coeff.v;
    f.view_mut((0, 0), (dim, dim)).copy_from(&pp);
    f.view_mut((0, dim), (dim, dim)).copy_from(&pv);
    f.view_mut((dim, 0), (dim, dim)).copy_from(&pv.transpose());
    f.view_mut((dim, dim), (dim, dim)).copy_from(&vv);
    // remove rounding asymmetry
    let f = (&f + f.transpose()) * 0.5;
    Ok(FisherMatrix { matrix: f, mobile, samples: cfg.samples, relative_std_error: (var / r).sqrt() / tm })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbResult {
    /// Mean per-component position bound (m^2).
    pub position: f64,
    /// Mean per-component velocity bound ((m/s)^2).
    pub velocity: f64,
    /// Set when the Fisher matrix was singular and a pseudo-inverse was used.
    pub degenerate: bool,
}

/// Averages of the position and velocity halves of `diag(F^-1)`.
pub fn joint_crlb(f: &FisherMatrix) -> Result<CrlbResult> {
    let dim = 3 * f.mobile;
    if f.matrix.shape() != (2 * dim, 2 * dim) {
        return Err(Error::Config(format!("Fisher matrix has shape {:?}, expected {}x{}", f.matrix.shape(), 2 * dim, 2 * dim)));
    }
    let (inv, degenerate) = match f.matrix.clone().cholesky() {
        Some(c) => (c.inverse(), false),
        None => {
            log::warn!("Fisher matrix is singular; using the pseudo-inverse");
            let pinv = f.matrix.clone().pseudo_inverse(1e-12 * f.matrix.amax()).map_err(|e| Error::Numerical(e.to_string()))?;
            (pinv, true)
        }
    };
    let d = inv.diagonal();
    let position = d.rows(0, dim).sum() / dim as f64;
    let velocity = d.rows(dim, dim).sum() / dim as f64;
    Ok(CrlbResult { position, velocity, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_diagonal_bound() {
        let f = FisherMatrix { matrix: DMatrix::identity(6, 6) * 4.0, mobile: 1, samples: 1, relative_std_error: 0.0 };
        let c = joint_crlb(&f).unwrap();
        assert!((c.position - 0.25).abs() < 1e-15 && (c.velocity - 0.25).abs() < 1e-15);
    }

    #[test]
    fn collinear_hand_jacobian() {
        // i at 0, j at 10, k at 30 on the x axis: the echo off k travels past j
        let p = [Vec3::new(0., 0., 0.), Vec3::new(10., 0., 0.), Vec3::new(30., 0., 0.)];
        let g = delta_position_jacobian(&p, &AnchorSet::none(3), 0, 1, 2).unwrap();
        // slot i: u_ik - u_ij = (-1) - (-1) = 0; slot j: u_jk - u_ji = -1 - 1 = -2; slot k: u_ki + u_kj = 2
        assert_eq!(g.as_slice(), &[0., 0., 0., -2., 0., 0., 2., 0., 0.]);
    }

    #[test]
    fn zero_velocity_gives_zero_position_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_random_swarm(&ScenarioParams { n: 6, vel_std: 0.0, ..Default::default() }, &mut rng).unwrap();
        let anchors = AnchorSet::from_swarm(&s);
        let (dp, _) = omega_jacobians(&s.positions(), &s.velocities(), &anchors, 4, 1, 5).unwrap();
        assert!(dp.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fisher_is_symmetric_psd() {
        let scenario = ScenarioParams::default();
        let grid = OtfsGridConfig::new(30e6, 0.02, 5e9).unwrap();
        let f = fisher_matrix(&CrlbConfig { samples: 20, ..Default::default() }, &grid, &scenario, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(f.matrix, f.matrix.transpose());
        let eig = f.matrix.clone().symmetric_eigenvalues();
        assert!(eig.min() >= -1e-8 * f.matrix.norm());
    }
}
