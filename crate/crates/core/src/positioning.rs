//! Position estimation by gradient descent on the relative-distance misfit.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{versor, SwarmState, Vec3};
use crate::measurement::{OtfsGridConfig, TrueObservations};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Constant(f64),
    BarzilaiBorwein,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    /// Relative-decrease stopping threshold.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Acceptance threshold is `beta * E_b`.
    pub beta: f64,
    pub max_restarts: usize,
    pub step_rule: StepRule,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self { epsilon: 1e-4, max_iterations: 100, beta: 2.0, max_restarts: 20, step_rule: StepRule::BarzilaiBorwein }
    }
}

const BB_FIRST_STEP: f64 = 1e-2;
const BB_MIN_STEP: f64 = 1e-8;
const BB_MAX_STEP: f64 = 1e3;

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.beta > 1.0) {
            return Err(Error::Config(format!("beta must exceed 1, got {}", self.beta)));
        }
        if let StepRule::Constant(g) = self.step_rule {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("constant step must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Relative echo distances `delta[i][j][k]` after map application; NaN where
/// `k` is `i` or `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedDistances {
    n: usize,
    delta: Vec<f64>,
}

impl OrderedDistances {
    pub fn new(n: usize) -> Self {
        Self { n, delta: vec![f64::NAN; n * n * n] }
    }

    pub fn from_truth(truth: &TrueObservations) -> Self {
        let n = truth.n;
        let mut d = Self::new(n);
        for (i, j, k) in echo_triples(n) {
            d.set(i, j, k, truth.distance(i, j, k));
        }
        d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.delta[(i * self.n + j) * self.n + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.delta[(i * self.n + j) * self.n + k] = v;
    }
}

/// `(i, j, k)` with `i != j` and `k` outside `{i, j}`.
pub fn echo_triples(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..n).flat_map(move |i| {
        (0..n).filter(move |&j| j != i).flat_map(move |j| (0..n).filter(move |&k| k != i && k != j).map(move |k| (i, j, k)))
    })
}

/// Which UAVs are anchors, and where.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    positions: Vec<Option<Vec3>>,
}

impl AnchorSet {
    pub fn new(positions: Vec<Option<Vec3>>) -> Self {
        Self { positions }
    }

    pub fn from_swarm(swarm: &SwarmState) -> Self {
        Self { positions: swarm.uavs().iter().map(|u| u.is_anchor.then_some(u.position)).collect() }
    }

    pub fn none(n: usize) -> Self {
        Self { positions: vec![None; n] }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_anchor(&self, i: usize) -> bool {
        self.positions[i].is_some()
    }

    pub fn position(&self, i: usize) -> Option<Vec3> {
        self.positions[i]
    }

    pub fn mask(&self) -> Vec<bool> {
        self.positions.iter().map(Option::is_some).collect()
    }

    pub fn mobile(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.is_anchor(i))
    }

    /// Overwrites anchor entries of `t` with the known positions.
    pub fn clamp(&self, t: &mut [Vec3]) {
        for (ti, a) in t.iter_mut().zip(&self.positions) {
            if let Some(p) = a {
                *ti = *p;
            }
        }
    }
}

fn theta(t: &[Vec3], i: usize, j: usize, k: usize) -> f64 {
    (t[j] - t[k]).norm() + (t[k] - t[i]).norm() - (t[j] - t[i]).norm()
}

/// Sum of squared differences between observed and tentative relative distances.
pub fn square_error(t: &[Vec3], obs: &OrderedDistances) -> f64 {
    echo_triples(obs.n).map(|(i, j, k)| (obs.get(i, j, k) - theta(t, i, j, k)).powi(2)).sum()
}

/// Analytic gradient of [`square_error`]; anchor blocks are zero.
pub fn gradient(t: &[Vec3], obs: &OrderedDistances, anchors: &AnchorSet) -> Vec<Vec3> {
    let n = obs.n;
    // u[a][b] points from b to a; zero when the two coincide
    let mut u = vec![Vec3::zeros(); n * n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                u[a * n + b] = versor(&t[a], &t[b]).unwrap_or_else(Vec3::zeros);
            }
        }
    }
    let mut w = vec![0.0; n * n * n];
    for (i, j, k) in echo_triples(n) {
        w[(i * n + j) * n + k] = obs.get(i, j, k) - theta(t, i, j, k);
    }
    let w = |i: usize, j: usize, k: usize| w[(i * n + j) * n + k];
    let mut g = vec![Vec3::zeros(); n];
    for h in anchors.mobile() {
        let mut acc = Vec3::zeros();
        for i in (0..n).filter(|&i| i != h) {
            for j in (0..n).filter(|&j| j != h && j != i) {
                let (uhi, uhj) = (u[h * n + i], u[h * n + j]);
                acc += (w(h, i, j) + w(i, h, j)) * (uhi - uhj) - w(i, j, h) * (uhi + uhj);
            }
        }
        g[h] = 2.0 * acc;
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdSolution {
    pub positions: Vec<Vec3>,
    pub error: f64,
    pub iterations: usize,
    /// Square error before the first step and after each step.
    pub history: Vec<f64>,
}

/// Gradient descent from `t0`. Anchors are held at their known positions.
pub fn gd_minimize(obs: &OrderedDistances, t0: &[Vec3], anchors: &AnchorSet, cfg: &GdConfig) -> Result<GdSolution> {
    gd_minimize_observed(obs, t0, anchors, cfg, |_, _, _| {})
}

/// As [`gd_minimize`], calling `observe(iteration, positions, error)` after every step.
pub fn gd_minimize_observed<F: FnMut(usize, &[Vec3], f64)>(
    obs: &OrderedDistances,
    t0: &[Vec3],
    anchors: &AnchorSet,
    cfg: &GdConfig,
    mut observe: F,
) -> Result<GdSolution> {
    cfg.validate()?;
    if t0.len() != obs.n || anchors.len() != obs.n {
        return Err(Error::Config(format!("expected {} positions, got {}", obs.n, t0.len())));
    }
    let mut t = t0.to_vec();
    anchors.clamp(&mut t);
    let mut e = square_error(&t, obs);
    check_finite(e, "initial square error")?;
    let mut history = vec![e];
    observe(0, &t, e);
    if cfg.max_iterations == 0 || e == 0.0 {
        return Ok(GdSolution { positions: t, error: e, iterations: 0, history });
    }

    let mut g = gradient(&t, obs, anchors);
    let mut gamma = match cfg.step_rule {
        StepRule::Constant(c) => c,
        StepRule::BarzilaiBorwein => BB_FIRST_STEP,
    };
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let next: Vec<Vec3> = t.iter().zip(&g).map(|(ti, gi)| ti - gamma * gi).collect();
        let e_next = square_error(&next, obs);
        check_finite(e_next, "square error")?;
        let g_next = gradient(&next, obs, anchors);
        if g_next.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Numerical(format!("non-finite gradient at iteration {}", iterations + 1)));
        }
        if cfg.step_rule == StepRule::BarzilaiBorwein {
            let (mut ss, mut sy) = (0.0, 0.0);
            for h in 0..t.len() {
                let s = next[h] - t[h];
                ss += s.norm_squared();
                sy += s.dot(&(g_next[h] - g[h]));
            }
            // keep the previous step when the curvature estimate is unusable
            if sy > 0.0 && ss > 0.0 {
                gamma = (ss / sy).clamp(BB_MIN_STEP, BB_MAX_STEP);
            }
        }
        t = next;
        g = g_next;
        iterations += 1;
        history.push(e_next);
        observe(iterations, &t, e_next);

        let rel = (e_next - e).abs() / e;
        e = e_next;
        if e == 0.0 {
            break;
        }
        let decreased = history.len() >= 4 && e < history[history.len() - 4];
        if rel < cfg.epsilon && decreased {
            break;
        }
    }
    Ok(GdSolution { positions: t, error: e, iterations, history })
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} is not finite")))
    }
}

/// Expected residual at the true configuration under uniform rounding of the
/// distances: `N (N-1) (N-2) (c/B)^2 / 12`.
pub fn e_b(n: usize, grid: &OtfsGridConfig) -> f64 {
    let s = grid.distance_step();
    (n * (n - 1) * (n - 2)) as f64 * s * s / 12.0
}

/// Where fresh starting points come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Every coordinate i.i.d. `N(mean, std^2)`.
    Prior { mean: f64, std: f64 },
    /// `center[i] + N(0, std^2 I)`.
    Around { center: Vec<Vec3>, std: f64 },
}

impl InitStrategy {
    pub fn scenario_prior() -> Self {
        Self::Prior { mean: 500.0, std: 1000.0 / 12f64.sqrt() }
    }

    pub fn draw<R: Rng + ?Sized>(&self, anchors: &AnchorSet, rng: &mut R) -> Result<Vec<Vec3>> {
        let n = anchors.len();
        let mut t = match self {
            Self::Prior { mean, std } => {
                let d = Normal::new(*mean, *std).map_err(|e| Error::Config(e.to_string()))?;
                (0..n).map(|_| Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng))).collect::<Vec<_>>()
            }
            Self::Around { center, std } => {
                if center.len() != n {
                    return Err(Error::Config(format!("prior has {} positions, expected {n}", center.len())));
                }
                let d = Normal::new(0.0, *std).map_err(|e| Error::Config(e.to_string()))?;
                center.iter().map(|c| c + Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng))).collect()
            }
        };
        anchors.clamp(&mut t);
        Ok(t)
    }
}

/// Runs [`gd_minimize`] from `init` (or a fresh draw) and keeps restarting from
/// fresh draws until the residual is at most `beta * E_b`. On exhaustion the
/// error carries the best solution seen.
pub fn solve_with_restarts<R: Rng + ?Sized>(
    obs: &OrderedDistances,
    anchors: &AnchorSet,
    cfg: &GdConfig,
    grid: &OtfsGridConfig,
    init: Option<&[Vec3]>,
    restart: &InitStrategy,
    rng: &mut R,
) -> Result<(GdSolution, usize)> {
    let threshold = cfg.beta * e_b(obs.n, grid);
    let mut best: Option<GdSolution> = None;
    for attempt in 0..=cfg.max_restarts {
        let t0 = match (attempt, init) {
            (0, Some(t)) => t.to_vec(),
            _ => restart.draw(anchors, rng)?,
        };
        let sol = gd_minimize(obs, &t0, anchors, cfg)?;
        if sol.error <= threshold {
            return Ok((sol, attempt));
        }
        if best.as_ref().is_none_or(|b| sol.error < b.error) {
            best = Some(sol);
        }
    }
    Err(Error::RestartsExhausted { best: Box::new(best.expect("at least one attempt")) })
}
