//! Sum-product message passing on the check-node graph.

use rayon::prelude::*;

use super::graph::{EchoColumns, FactorGraph};
use super::kernel::NoiseKernel;
use super::{BpConfig, MarginalTensor};
use crate::error::{Error, Result};
use crate::measurement::{ChannelLists, OtfsGridConfig};

/// Runs `cfg.iterations` flooding rounds and returns the beliefs.
pub fn compute_marginals(lists: &ChannelLists, grid: &OtfsGridConfig, cfg: &BpConfig) -> Result<MarginalTensor> {
    cfg.validate()?;
    grid.validate()?;
    lists.validate()?;
    let graph = FactorGraph::new(lists.n(), cfg.use_doppler_checks);
    run(&graph, lists, grid, cfg)
}

pub(crate) fn run(graph: &FactorGraph, lists: &ChannelLists, grid: &OtfsGridConfig, cfg: &BpConfig) -> Result<MarginalTensor> {
    let n = graph.n();
    if n < 3 {
        return Err(Error::Config(format!("need at least 3 UAVs, have {n}")));
    }
    let k = n - 2;
    let cols = EchoColumns::new(lists);
    let kernels = [NoiseKernel::new(grid.distance_step()), NoiseKernel::new(grid.velocity_step())];
    let checks = graph.checks();
    let stride = 4 * k;

    let uniform = 1.0 / k as f64;
    let mut lambda = vec![uniform; checks.len() * stride];
    let mut zeta = vec![uniform; checks.len() * stride];
    let mut resets = 0usize;

    for _ in 0..cfg.iterations {
        resets += zeta
            .par_chunks_mut(stride)
            .zip(lambda.par_chunks(stride))
            .zip(checks.par_iter())
            .map(|((out, lam), check)| {
                let (x, sign, distinct_st) = cols.terms(check);
                let kernel = &kernels[(check.kind == super::graph::CheckKind::Doppler) as usize];
                check_messages(k, x, sign, distinct_st, kernel, lam, out);
                let mut bad = 0;
                for msg in out.chunks_mut(k) {
                    bad += normalize(msg, cfg.message_floor) as usize;
                }
                bad
            })
            .sum::<usize>();

        let mut next = lambda.clone();
        let mut log_total = vec![0.0; k];
        for [i, j, h] in graph.variables() {
            let nb = graph.neighbours(i, j, h);
            log_total.iter_mut().for_each(|v| *v = 0.0);
            for &(c, slot) in nb {
                let msg = &zeta[c * stride + slot * k..][..k];
                for (acc, z) in log_total.iter_mut().zip(msg) {
                    *acc += z.ln();
                }
            }
            for &(c, slot) in nb {
                let off = c * stride + slot * k;
                let msg = &zeta[off..off + k];
                let out = &mut next[off..off + k];
                for ((o, t), z) in out.iter_mut().zip(&log_total).zip(msg) {
                    *o = t - z.ln();
                }
                resets += exp_normalize(out) as usize;
                if cfg.damping > 0.0 {
                    for (o, old) in out.iter_mut().zip(&lambda[off..off + k]) {
                        *o = (1.0 - cfg.damping) * *o + cfg.damping * old;
                    }
                }
            }
        }
        lambda = next;
    }

    let mut tensor = MarginalTensor::pinned(n);
    tensor.underflow_resets = resets;
    let mut belief = vec![0.0; k];
    for [i, j, h] in graph.variables() {
        belief.iter_mut().for_each(|v| *v = 0.0);
        for &(c, slot) in graph.neighbours(i, j, h) {
            for (acc, z) in belief.iter_mut().zip(&zeta[c * stride + slot * k..][..k]) {
                *acc += z.ln();
            }
        }
        tensor.underflow_resets += exp_normalize(&mut belief) as usize;
        let row = tensor.row_mut(i, j, h);
        row[0] = 0.0;
        row[1..].copy_from_slice(&belief);
    }
    if tensor.underflow_resets > 0 {
        log::debug!("belief propagation reset {} all-zero messages to uniform", tensor.underflow_resets);
    }
    Ok(tensor)
}

/// Accumulates the four outgoing messages of one check in a single pass over
/// all `(m, n, s, t)` index combinations.
fn check_messages(k: usize, x: [&[f64]; 4], sign: [f64; 4], distinct_st: bool, kernel: &NoiseKernel, lam: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let (l0, l1, l2, l3) = (&lam[..k], &lam[k..2 * k], &lam[2 * k..3 * k], &lam[3 * k..]);
    let reach = kernel.support();
    let (lo3, hi3) = x[3].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(sign[3] * v), b.max(sign[3] * v)));
    for m in 0..k {
        let a = sign[0] * x[0][m];
        for n in 0..k {
            if n == m {
                continue;
            }
            let b = a + sign[1] * x[1][n];
            for s in 0..k {
                let c = b + sign[2] * x[2][s];
                if c + hi3 <= -reach || c + lo3 >= reach {
                    continue;
                }
                for t in 0..k {
                    if distinct_st && t == s {
                        continue;
                    }
                    let g = kernel.eval(c + sign[3] * x[3][t]);
                    if g == 0.0 {
                        continue;
                    }
                    out[m] += g * l1[n] * l2[s] * l3[t];
                    out[k + n] += g * l0[m] * l2[s] * l3[t];
                    out[2 * k + s] += g * l0[m] * l1[n] * l3[t];
                    out[3 * k + t] += g * l0[m] * l1[n] * l2[s];
                }
            }
        }
    }
}

// Normalizes to unit sum with entries at least `floor`. Returns true if the
// vector carried no mass and was reset to uniform.
fn normalize(v: &mut [f64], floor: f64) -> bool {
    let sum: f64 = v.iter().sum();
    let reset = !(sum > 0.0 && sum.is_finite());
    if reset {
        v.iter_mut().for_each(|x| *x = 1.0);
    } else {
        v.iter_mut().for_each(|x| *x /= sum);
    }
    if floor > 0.0 {
        v.iter_mut().for_each(|x| *x = x.max(floor));
    }
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    reset
}

// Turns log-weights into a probability vector in place.
fn exp_normalize(v: &mut [f64]) -> bool {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
        return true;
    }
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
    false
}
