//! Factor graph over the echo-assignment variables and flooding BP on it.

use crate::measurement::{ordered_pairs, ChannelLists};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    /// `d_ij[m] - d_ij[n] + d_ik[s] - d_jh[t]`
    Delay,
    /// `v_ij[m] + v_ij[n] - v_kh[s] - v_kh[t]`
    Doppler,
}

/// A check node on the quadruple `[i, j, k, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Check {
    pub kind: CheckKind,
    pub quad: [usize; 4],
    /// Neighbouring variables as `(i, j, k)` triples, in slot order.
    pub vars: [[usize; 3]; 4],
}

impl Check {
    fn new(kind: CheckKind, [i, j, k, h]: [usize; 4]) -> Self {
        let vars = match kind {
            CheckKind::Delay => [[i, j, k], [i, j, h], [i, k, h], [j, h, k]],
            CheckKind::Doppler => [[i, j, k], [i, j, h], [k, h, i], [k, h, j]],
        };
        Self { kind, quad: [i, j, k, h], vars }
    }
}

/// Variables are the echo triples `[i, j, k]`, `k` not in `{i, j}`; each takes
/// a value in the echo slots `1..N-1` of list `(i, j)`.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    n: usize,
    checks: Vec<Check>,
    // dense triple index -> (check, slot)
    incidence: Vec<Vec<(usize, usize)>>,
}

impl FactorGraph {
    pub fn new(n: usize, with_doppler: bool) -> Self {
        let mut checks = Vec::new();
        let kinds: &[CheckKind] = if with_doppler { &[CheckKind::Delay, CheckKind::Doppler] } else { &[CheckKind::Delay] };
        for &kind in kinds {
            for q in quadruples(n) {
                checks.push(Check::new(kind, q));
            }
        }
        let mut incidence = vec![Vec::new(); n * n * n];
        for (c, check) in checks.iter().enumerate() {
            for (slot, &[a, b, d]) in check.vars.iter().enumerate() {
                incidence[(a * n + b) * n + d].push((c, slot));
            }
        }
        Self { n, checks, incidence }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    /// Checks adjacent to variable `[i, j, k]`, as `(check index, slot)`.
    pub fn neighbours(&self, i: usize, j: usize, k: usize) -> &[(usize, usize)] {
        &self.incidence[(i * self.n + j) * self.n + k]
    }

    pub fn variables(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| {
            (0..n).filter(move |&j| j != i).flat_map(move |j| (0..n).filter(move |&k| k != i && k != j).map(move |k| [i, j, k]))
        })
    }
}

/// All ordered quadruples of distinct ids.
pub fn quadruples(n: usize) -> impl Iterator<Item = [usize; 4]> {
    (0..n).flat_map(move |i| {
        (0..n).filter(move |&j| j != i).flat_map(move |j| {
            (0..n)
                .filter(move |&k| k != i && k != j)
                .flat_map(move |k| (0..n).filter(move |&h| h != i && h != j && h != k).map(move |h| [i, j, k, h]))
        })
    })
}

// Per-link echo columns, precomputed once so residual terms can be sliced.
pub(crate) struct EchoColumns {
    n: usize,
    d: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl EchoColumns {
    pub(crate) fn new(lists: &ChannelLists) -> Self {
        let n = lists.n();
        let mut d = vec![Vec::new(); n * n];
        let mut v = vec![Vec::new(); n * n];
        for (i, j) in ordered_pairs(n) {
            let l = &lists.list(i, j)[1..];
            d[i * n + j] = l.iter().map(|e| e.distance).collect();
            v[i * n + j] = l.iter().map(|e| e.velocity).collect();
        }
        Self { n, d, v }
    }

    pub(crate) fn terms(&self, check: &Check) -> ([&[f64]; 4], [f64; 4], bool) {
        let [i, j, k, h] = check.quad;
        let n = self.n;
        match check.kind {
            CheckKind::Delay => {
                let (a, b, c) = (&self.d[i * n + j], &self.d[i * n + k], &self.d[j * n + h]);
                ([a, a, b, c], [1.0, -1.0, 1.0, -1.0], false)
            }
            CheckKind::Doppler => {
                let (a, b) = (&self.v[i * n + j], &self.v[k * n + h]);
                ([a, a, b, b], [1.0, 1.0, -1.0, -1.0], true)
            }
        }
    }
}
