//! Least-squares velocity recovery from map-ordered Doppler observations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{versor, Vec3};
use crate::measurement::TrueObservations;
use crate::positioning::AnchorSet;

/// Radial velocities `omega[i][j][k]` for every `k != i` (line of sight at `k == j`).
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedVelocities {
    n: usize,
    omega: Vec<f64>,
}

impl OrderedVelocities {
    pub fn new(n: usize) -> Self {
        Self { n, omega: vec![f64::NAN; n * n * n] }
    }

    pub fn from_truth(truth: &TrueObservations) -> Self {
        let n = truth.n;
        let mut o = Self::new(n);
        for (i, j, k) in observation_triples(n) {
            o.set(i, j, k, truth.velocity(i, j, k));
        }
        o
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.omega[(i * self.n + j) * self.n + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.omega[(i * self.n + j) * self.n + k] = v;
    }
}

/// `(i, j, k)` with `j != i` and `k != i`, in row order of the design.
pub fn observation_triples(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..n).flat_map(move |i| {
        (0..n).filter(move |&j| j != i).flat_map(move |j| (0..n).filter(move |&k| k != i).map(move |k| (i, j, k)))
    })
}

/// Coefficients of `omega_ijk` on the velocities of `(i, j, k)`.
pub fn velocity_coefficients(p: &[Vec3], i: usize, j: usize, k: usize) -> Result<[(usize, Vec3); 3]> {
    let err = || Error::Domain(format!("coincident positions in velocity design row ({i}, {j}, {k})"));
    if k == j {
        let u_ji = versor(&p[j], &p[i]).ok_or_else(err)?;
        return Ok([(j, u_ji), (i, -u_ji), (k, Vec3::zeros())]);
    }
    let u_jk = versor(&p[j], &p[k]).ok_or_else(err)?;
    let u_ki = versor(&p[k], &p[i]).ok_or_else(err)?;
    Ok([(j, u_jk), (k, u_ki - u_jk), (i, -u_ki)])
}

/// Reduced design: one row per observation, one 3-column block per non-anchor.
#[derive(Debug, Clone)]
pub struct VelocityDesign {
    pub n: usize,
    /// Non-anchor ids in column-block order.
    pub mobile: Vec<usize>,
    pub rows: Vec<(usize, usize, usize)>,
    pub matrix: DMatrix<f64>,
}

/// Builds the design at positions `p`. Anchor velocities are zero, so their
/// columns are simply dropped.
pub fn build_design(p: &[Vec3], anchors: &AnchorSet) -> Result<VelocityDesign> {
    let n = p.len();
    let mobile: Vec<usize> = anchors.mobile().collect();
    let mut block = vec![usize::MAX; n];
    for (b, &i) in mobile.iter().enumerate() {
        block[i] = b;
    }
    let rows: Vec<_> = observation_triples(n).collect();
    let mut matrix = DMatrix::zeros(if mobile.is_empty() { 0 } else { rows.len() }, 3 * mobile.len());
    if !mobile.is_empty() {
        for (r, &(i, j, k)) in rows.iter().enumerate() {
            for (who, c) in velocity_coefficients(p, i, j, k)? {
                if block[who] != usize::MAX {
                    for a in 0..3 {
                        matrix[(r, 3 * block[who] + a)] += c[a];
                    }
                }
            }
        }
    }
    let rows = if mobile.is_empty() { Vec::new() } else { rows };
    Ok(VelocityDesign { n, mobile, rows, matrix })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityEstimate {
    /// One entry per UAV; anchors are zero.
    pub velocities: Vec<Vec3>,
    /// Set when the design is rank deficient and the minimum-norm solution was used.
    pub degenerate: bool,
}

const RANK_TOL: f64 = 1e-10;

/// Least-squares solution of `design * v = omega` through an SVD.
pub fn estimate_velocities(design: &VelocityDesign, omega: &OrderedVelocities) -> Result<VelocityEstimate> {
    let mut velocities = vec![Vec3::zeros(); design.n];
    if design.mobile.is_empty() {
        return Ok(VelocityEstimate { velocities, degenerate: false });
    }
    let b = DVector::from_iterator(design.rows.len(), design.rows.iter().map(|&(i, j, k)| omega.get(i, j, k)));
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite Doppler observation".into()));
    }
    let svd = design.matrix.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let degenerate = svd.singular_values.iter().any(|&s| s <= eps);
    let x = svd.solve(&b, eps).map_err(|e| Error::Numerical(e.to_string()))?;
    for (blk, &i) in design.mobile.iter().enumerate() {
        velocities[i] = Vec3::new(x[3 * blk], x[3 * blk + 1], x[3 * blk + 2]);
    }
    if degenerate {
        log::warn!("velocity design is rank deficient; using the minimum-norm solution");
    }
    Ok(VelocityEstimate { velocities, degenerate })
}
