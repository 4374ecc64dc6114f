//! Recovering which list entry belongs to which reflector.
//!
//! Each ordered link `(i, j)` reports its echoes sorted by distance, so the
//! receiver does not know which UAV produced which echo. Four-UAV closure
//! identities on the relative distances (and optionally on the Doppler
//! velocities) tie the lists of different links together; loopy belief
//! propagation over those checks yields per-echo marginals, and a greedy
//! decoder turns them into one bijection per link.

mod bp;
mod brute;
mod graph;
mod kernel;

pub use bp::compute_marginals;
pub use brute::{assignment_log_likelihood, brute_force_maps, BRUTE_FORCE_LIMIT};
pub use graph::{quadruples, Check, CheckKind, FactorGraph};
pub use kernel::{kernel_eval, NoiseKernel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{ordered_pairs, AssignmentMaps, ChannelLists, OtfsGridConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpConfig {
    /// Number of flooding rounds I_μ.
    pub iterations: usize,
    pub use_doppler_checks: bool,
    /// Weight of the previous variable-to-check message, in `[0, 1)`.
    pub damping: f64,
    /// Lower bound applied to every normalized check message.
    pub message_floor: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self { iterations: 2, use_doppler_checks: true, damping: 0.0, message_floor: 1e-12 }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("BP needs at least one iteration".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if !(self.message_floor > 0.0 && self.message_floor < 1.0) {
            return Err(Error::Config(format!("message floor must lie in (0, 1), got {}", self.message_floor)));
        }
        Ok(())
    }
}

/// Beliefs `pi[i][j][k][m]` that reflector `k` sits at list index `m` of link `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTensor {
    n: usize,
    pi: Vec<f64>,
    /// All-zero messages replaced by uniform ones during the run.
    pub underflow_resets: usize,
}

impl MarginalTensor {
    /// Line-of-sight rows pinned, echo rows uniform over the echo slots.
    pub fn pinned(n: usize) -> Self {
        let mut t = Self { n, pi: vec![0.0; n * n * n * (n - 1)], underflow_resets: 0 };
        for (i, j) in ordered_pairs(n) {
            for k in (0..n).filter(|&k| k != i) {
                let row = t.row_mut(i, j, k);
                if k == j {
                    row[0] = 1.0;
                } else {
                    let u = 1.0 / (n - 2) as f64;
                    row[1..].iter_mut().for_each(|p| *p = u);
                }
            }
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize, j: usize, k: usize) -> &[f64] {
        let w = self.n - 1;
        &self.pi[((i * self.n + j) * self.n + k) * w..][..w]
    }

    pub fn row_mut(&mut self, i: usize, j: usize, k: usize) -> &mut [f64] {
        let w = self.n - 1;
        &mut self.pi[((i * self.n + j) * self.n + k) * w..][..w]
    }

    pub fn get(&self, i: usize, j: usize, k: usize, m: usize) -> f64 {
        self.row(i, j, k)[m]
    }

    /// Writes the tensor as `i j k p_0 .. p_{N-2}` rows.
    pub fn dump<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for (i, j) in ordered_pairs(self.n) {
            for k in (0..self.n).filter(|&k| k != i) {
                write!(out, "{i} {j} {k}")?;
                for p in self.row(i, j, k) {
                    write!(out, " {p:.6e}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

/// Greedy decoding: repeatedly take the largest remaining entry of each link's
/// `(k, m)` belief matrix, then retire its row and column. Ties go to the
/// lowest `(k, m)`.
pub fn estimate_maps(marginals: &MarginalTensor) -> AssignmentMaps {
    let n = marginals.n();
    let mut maps = AssignmentMaps::unset(n);
    for (i, j) in ordered_pairs(n) {
        let mut row_free = vec![true; n];
        row_free[i] = false;
        let mut col_free = vec![true; n - 1];
        for _ in 0..n - 1 {
            let mut best: Option<(f64, usize, usize)> = None;
            for k in (0..n).filter(|&k| row_free[k]) {
                for (m, &p) in marginals.row(i, j, k).iter().enumerate() {
                    if col_free[m] && best.is_none_or(|(b, _, _)| p > b) {
                        best = Some((p, k, m));
                    }
                }
            }
            let (_, k, m) = best.expect("free row and column remain");
            maps.set(i, j, k, m);
            row_free[k] = false;
            col_free[m] = false;
        }
    }
    maps
}

/// Marginals followed by greedy decoding.
pub fn estimate_maps_from_lists(lists: &ChannelLists, grid: &OtfsGridConfig, cfg: &BpConfig) -> Result<AssignmentMaps> {
    Ok(estimate_maps(&compute_marginals(lists, grid, cfg)?))
}
