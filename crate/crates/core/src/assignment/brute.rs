//! Exact joint maximum-likelihood assignment for small swarms.
//!
//! The search runs depth-first over links, choosing one permutation of echo
//! slots per link. A check contributes `ln g(residual)` as soon as all links it
//! reads from are fixed; branches with a zero-likelihood check are cut, and so
//! are branches whose score cannot beat the incumbent even if every remaining
//! check hit the kernel peak. Both cuts are exact, so the result is the true
//! maximizer.

use super::graph::{Check, CheckKind, EchoColumns, FactorGraph};
use super::kernel::NoiseKernel;
use crate::error::{Error, Result};
use crate::measurement::{ordered_pairs, AssignmentMaps, ChannelLists, OtfsGridConfig};

pub const BRUTE_FORCE_LIMIT: usize = 5;

/// Sum over all checks of `ln g(residual)` under `maps`. Returns `-inf` when
/// some check is infeasible.
pub fn assignment_log_likelihood(lists: &ChannelLists, grid: &OtfsGridConfig, maps: &AssignmentMaps, use_doppler: bool) -> f64 {
    let n = lists.n();
    let graph = FactorGraph::new(n, use_doppler);
    let cols = EchoColumns::new(lists);
    let kernels = kernels(grid);
    graph
        .checks()
        .iter()
        .map(|c| {
            let slots = c.vars.map(|[a, b, k]| maps.get(a, b, k) - 1);
            check_log(c, &cols, &kernels, slots)
        })
        .sum()
}

/// Exhaustive joint maximizer; refuses `n > BRUTE_FORCE_LIMIT`.
pub fn brute_force_maps(lists: &ChannelLists, grid: &OtfsGridConfig, use_doppler: bool) -> Result<AssignmentMaps> {
    let n = lists.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { n, limit: BRUTE_FORCE_LIMIT });
    }
    grid.validate()?;
    lists.validate()?;
    if n < 4 {
        // no checks: every assignment scores the same
        return Ok(AssignmentMaps::identity(n));
    }

    let graph = FactorGraph::new(n, use_doppler);
    let cols = EchoColumns::new(lists);
    let kernels = kernels(grid);
    let pairs: Vec<(usize, usize)> = ordered_pairs(n).collect();
    let pair_index = |a: usize, b: usize| pairs.iter().position(|&p| p == (a, b)).unwrap();
    let check_pairs: Vec<Vec<usize>> = graph
        .checks()
        .iter()
        .map(|c| {
            let mut v: Vec<usize> = c.vars.iter().map(|&[a, b, _]| pair_index(a, b)).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();

    // Order links so that checks close as early as possible.
    let mut order = Vec::with_capacity(pairs.len());
    let mut placed = vec![false; pairs.len()];
    for _ in 0..pairs.len() {
        let next = (0..pairs.len())
            .filter(|&p| !placed[p])
            .max_by_key(|&p| {
                let closes = check_pairs.iter().filter(|cp| cp.contains(&p) && cp.iter().all(|&q| q == p || placed[q])).count();
                (closes, std::cmp::Reverse(p))
            })
            .unwrap();
        placed[next] = true;
        order.push(next);
    }
    let depth_of: Vec<usize> = {
        let mut d = vec![0; pairs.len()];
        for (depth, &p) in order.iter().enumerate() {
            d[p] = depth;
        }
        d
    };
    let mut closing: Vec<Vec<usize>> = vec![Vec::new(); pairs.len()];
    for (c, cp) in check_pairs.iter().enumerate() {
        closing[cp.iter().map(|&p| depth_of[p]).max().unwrap()].push(c);
    }
    let peak: Vec<f64> = graph.checks().iter().map(|c| kernel_for(c, &kernels).peak().ln()).collect();
    // best possible contribution of checks closing at depth > d
    let mut tail = vec![0.0; pairs.len() + 1];
    for d in (0..pairs.len()).rev() {
        tail[d] = tail[d + 1] + closing[d].iter().map(|&c| peak[c]).sum::<f64>();
    }

    let perms = permutations(n - 2);
    let echoes: Vec<Vec<usize>> = pairs.iter().map(|&(i, j)| (0..n).filter(|&k| k != i && k != j).collect()).collect();
    let mut search = Search {
        n,
        graph: &graph,
        cols: &cols,
        kernels: &kernels,
        order: &order,
        closing: &closing,
        tail: &tail,
        perms: &perms,
        echoes: &echoes,
        pairs: &pairs,
        // slot[(a * n + b) * n + k] for the current partial assignment
        slot: vec![usize::MAX; n * n * n],
        choice: vec![0; pairs.len()],
        best_score: f64::NEG_INFINITY,
        best: None,
    };
    search.descend(0, 0.0);
    let best = search.best.ok_or_else(|| Error::Numerical("no feasible assignment: every candidate has a zero-likelihood check".into()))?;

    let mut maps = AssignmentMaps::unset(n);
    for (p, &(i, j)) in pairs.iter().enumerate() {
        maps.set(i, j, j, 0);
        for (r, &k) in echoes[p].iter().enumerate() {
            maps.set(i, j, k, perms[best[p]][r] + 1);
        }
    }
    Ok(maps)
}

struct Search<'a> {
    n: usize,
    graph: &'a FactorGraph,
    cols: &'a EchoColumns,
    kernels: &'a [NoiseKernel; 2],
    order: &'a [usize],
    closing: &'a [Vec<usize>],
    tail: &'a [f64],
    perms: &'a [Vec<usize>],
    echoes: &'a [Vec<usize>],
    pairs: &'a [(usize, usize)],
    slot: Vec<usize>,
    choice: Vec<usize>,
    best_score: f64,
    best: Option<Vec<usize>>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, score: f64) {
        if depth == self.order.len() {
            if score > self.best_score {
                self.best_score = score;
                self.best = Some(self.choice.clone());
            }
            return;
        }
        let p = self.order[depth];
        let (i, j) = self.pairs[p];
        'perm: for (pi, perm) in self.perms.iter().enumerate() {
            for (r, &k) in self.echoes[p].iter().enumerate() {
                self.slot[(i * self.n + j) * self.n + k] = perm[r];
            }
            let mut s = score;
            for &c in &self.closing[depth] {
                let check = &self.graph.checks()[c];
                let slots = check.vars.map(|[a, b, k]| self.slot[(a * self.n + b) * self.n + k]);
                s += check_log(check, self.cols, self.kernels, slots);
                if s == f64::NEG_INFINITY {
                    continue 'perm;
                }
            }
            if s + self.tail[depth + 1] <= self.best_score {
                continue;
            }
            self.choice[p] = pi;
            self.descend(depth + 1, s);
        }
    }
}

fn kernels(grid: &OtfsGridConfig) -> [NoiseKernel; 2] {
    [NoiseKernel::new(grid.distance_step()), NoiseKernel::new(grid.velocity_step())]
}

fn kernel_for<'k>(check: &Check, kernels: &'k [NoiseKernel; 2]) -> &'k NoiseKernel {
    &kernels[(check.kind == CheckKind::Doppler) as usize]
}

fn check_log(check: &Check, cols: &EchoColumns, kernels: &[NoiseKernel; 2], slots: [usize; 4]) -> f64 {
    let (x, sign, _) = cols.terms(check);
    let z: f64 = (0..4).map(|q| sign[q] * x[q][slots[q]]).sum();
    kernel_for(check, kernels).eval(z).ln()
}

// All permutations of 0..k in lexicographic order.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(a) = (0..k.saturating_sub(1)).rev().find(|&a| cur[a] < cur[a + 1]) else { break };
        let b = (a + 1..k).rev().find(|&b| cur[b] > cur[a]).unwrap();
        cur.swap(a, b);
        cur[a + 1..].reverse();
    }
    out
}
