//! Monte-Carlo parameter sweeps.

use std::io::{BufRead, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario};
use super::metrics::{rmse_position, rmse_velocity};
use crate::crlb::{fisher_matrix, joint_crlb};
use crate::error::{Error, Result};
use crate::geometry::{SwarmState, Vec3};
use crate::measurement::{build_measurements_with, OtfsGridConfig};
use crate::positioning::AnchorSet;
use crate::tip::{run_cold_start, run_genie_aided, EstimationResult, TipConfig, TipMode};

// Generator streams; the scenario and noise streams ignore the sweep point so
// that every point sees the same swarms.
const STREAM_SCENARIO: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_SOLVER: u64 = 2;
const STREAMS: u64 = 4;

/// Generator for `(run, stream)` under base seed `seed`.
pub fn run_rng(seed: u64, run: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64 * STREAMS + stream);
    rng
}

/// One combination of swept values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub bandwidth: f64,
    pub frame_duration: f64,
    /// Zero for genie-aided rows, which do not iterate.
    pub turbo_iterations: usize,
    /// Zero for genie-aided rows, which do not run BP.
    pub bp_iterations: usize,
    pub mode: TipMode,
    pub gd_max_iterations: usize,
}

impl SweepPoint {
    pub fn grid(&self, base: &OtfsGridConfig) -> OtfsGridConfig {
        OtfsGridConfig { bandwidth: self.bandwidth, frame_duration: self.frame_duration, ..*base }
    }

    pub fn tip(&self, base: &TipConfig) -> TipConfig {
        let mut t = *base;
        t.mode = self.mode;
        t.gd.max_iterations = self.gd_max_iterations;
        if self.mode != TipMode::GenieAided {
            t.turbo_iterations = self.turbo_iterations;
            t.bp.iterations = self.bp_iterations;
        }
        t
    }
}

/// Cartesian product of the sweep axes, in axis order. Genie-aided points
/// collapse the BP and turbo axes.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let s = &cfg.sweep;
    let mut out = Vec::new();
    for &bandwidth in &s.bandwidths {
        for &frame_duration in &s.frame_durations {
            for &mode in &s.modes {
                let (turbo, bp): (&[usize], &[usize]) =
                    if mode == TipMode::GenieAided { (&[0], &[0]) } else { (&s.turbo_iterations, &s.bp_iterations) };
                for &turbo_iterations in turbo {
                    for &bp_iterations in bp {
                        for &gd_max_iterations in &s.gd_max_iterations {
                            out.push(SweepPoint { bandwidth, frame_duration, turbo_iterations, bp_iterations, mode, gd_max_iterations });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Result of a single seeded run at one point.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub truth: SwarmState,
    /// `Err` carries the failure message; failed runs are left out of the RMSE.
    pub estimate: std::result::Result<EstimationResult, String>,
    /// False when the restart budget ran out; the estimate is then the best
    /// attempt and still counts.
    pub converged: bool,
    /// Map entries that differ from the true maps.
    pub map_errors: Option<usize>,
    pub seconds: f64,
}

/// Aggregate over the runs of one sweep point. Averages are over successful
/// runs and empty when every run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub bandwidth_hz: f64,
    pub frame_duration_s: f64,
    pub turbo_iterations: usize,
    pub bp_iterations: usize,
    pub mode: TipMode,
    pub gd_max_iterations: usize,
    pub runs: usize,
    /// Runs that raised an error; excluded from every average.
    pub failures: usize,
    /// Runs whose residual never reached the threshold; included.
    pub unconverged: usize,
    pub rmse_p_m: Option<f64>,
    pub rmse_v_mps: Option<f64>,
    pub mean_gd_iterations: Option<f64>,
    pub mean_restarts: Option<f64>,
    /// Fraction of map entries that differ from the true maps.
    pub map_error_rate: Option<f64>,
    /// Square root of the mean per-component bound.
    pub crlb_p_m: Option<f64>,
    pub crlb_v_mps: Option<f64>,
    /// Summed run time; not reproducible.
    pub wall_time_s: f64,
}

/// Runs one point for one swarm.
pub fn run_single(cfg: &ExperimentConfig, point: &SweepPoint, swarm: &SwarmState, run: usize) -> RunOutcome {
    let start = Instant::now();
    let grid = point.grid(&cfg.grid);
    let tip = point.tip(&cfg.tip);
    let anchors = AnchorSet::from_swarm(swarm);
    let mut rng = run_rng(cfg.seed, run, STREAM_SOLVER);
    let res = build_measurements_with(swarm, &grid, &mut run_rng(cfg.seed, run, STREAM_NOISE)).and_then(|meas| {
        let (est, converged) = match point.mode {
            TipMode::GenieAided => run_genie_aided(&meas, &anchors, &tip, &mut rng),
            _ => run_cold_start(&meas, &anchors, &tip, &mut rng),
        }
        .map(|e| (e, true))
        .or_else(|e| match e {
            Error::TipFailed { best } => Ok((*best, false)),
            e => Err(e),
        })?;
        let diff = est.maps.count_differences(&meas.truth_maps);
        Ok((est, converged, diff))
    });
    let (estimate, converged, map_errors) = match res {
        Ok((e, c, d)) => (Ok(e), c, Some(d)),
        Err(e) => (Err(e.to_string()), false, None),
    };
    RunOutcome { run, truth: swarm.clone(), estimate, converged, map_errors, seconds: start.elapsed().as_secs_f64() }
}

/// Swarm for every run, drawn from the scenario stream of each run.
pub fn draw_swarms(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<SwarmState>> {
    (0..cfg.runs).map(|r| scenario.swarm(r, &mut run_rng(cfg.seed, r, STREAM_SCENARIO))).collect()
}

pub fn aggregate(point: &SweepPoint, outcomes: &[RunOutcome]) -> Result<RunRecord> {
    let ok: Vec<(&SwarmState, &EstimationResult)> =
        outcomes.iter().filter_map(|o| o.estimate.as_ref().ok().map(|e| (&o.truth, e))).collect();
    let mut rec = RunRecord {
        bandwidth_hz: point.bandwidth,
        frame_duration_s: point.frame_duration,
        turbo_iterations: point.turbo_iterations,
        bp_iterations: point.bp_iterations,
        mode: point.mode,
        gd_max_iterations: point.gd_max_iterations,
        runs: outcomes.len(),
        failures: outcomes.len() - ok.len(),
        unconverged: outcomes.iter().filter(|o| o.estimate.is_ok() && !o.converged).count(),
        rmse_p_m: None,
        rmse_v_mps: None,
        mean_gd_iterations: None,
        mean_restarts: None,
        map_error_rate: None,
        crlb_p_m: None,
        crlb_v_mps: None,
        wall_time_s: outcomes.iter().map(|o| o.seconds).sum(),
    };
    if let Some((s, _)) = ok.first() {
        let mask = s.anchor_mask();
        let p: Vec<(Vec<Vec3>, Vec<Vec3>)> = ok.iter().map(|(s, e)| (e.positions.clone(), s.positions())).collect();
        let v: Vec<(Vec<Vec3>, Vec<Vec3>)> = ok.iter().map(|(s, e)| (e.velocities.clone(), s.velocities())).collect();
        let k = ok.len() as f64;
        let n = mask.len();
        rec.rmse_p_m = Some(rmse_position(&p, &mask)?);
        rec.rmse_v_mps = Some(rmse_velocity(&v, &mask)?);
        rec.mean_gd_iterations = Some(ok.iter().map(|(_, e)| e.gd_iterations() as f64).sum::<f64>() / k);
        rec.mean_restarts = Some(ok.iter().map(|(_, e)| e.restarts as f64).sum::<f64>() / k);
        let entries = (n * (n - 1) * (n - 1)) as f64;
        rec.map_error_rate = Some(outcomes.iter().filter_map(|o| o.map_errors).sum::<usize>() as f64 / (k * entries));
    }
    Ok(rec)
}

/// Runs every point of the sweep, `cfg.runs` times each, and writes the CSV
/// and the per-run log when the config names them.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let scenario = Scenario::load(&cfg.scenario)?;
    let swarms = draw_swarms(cfg, &scenario)?;
    let points = sweep_points(cfg);
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..cfg.runs).map(move |r| (p, r))).collect();
    let outcomes: Vec<RunOutcome> = jobs.par_iter().map(|&(p, r)| run_single(cfg, &points[p], &swarms[r], r)).collect();

    let bounds = if cfg.crlb { Some(bounds(cfg, &scenario, &points)?) } else { None };
    let mut records = Vec::with_capacity(points.len());
    for (p, chunk) in outcomes.chunks(cfg.runs).enumerate() {
        let mut rec = aggregate(&points[p], chunk)?;
        if let Some(b) = &bounds {
            (rec.crlb_p_m, rec.crlb_v_mps) = b[p];
        }
        records.push(rec);
    }

    if let Some(path) = &cfg.log {
        let mut log = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (&(p, _), o) in jobs.iter().zip(&outcomes) {
            write_log_line(&mut log, p, &points[p], o)?;
        }
        log.flush()?;
    }
    if let Some(path) = &cfg.output {
        write_records(&records, std::fs::File::create(path)?)?;
    }
    Ok(records)
}

// Bound per point; computed once per grid and reused across solver settings.
fn bounds(cfg: &ExperimentConfig, scenario: &Scenario, points: &[SweepPoint]) -> Result<Vec<(Option<f64>, Option<f64>)>> {
    let Some(params) = scenario.params() else {
        log::warn!("the bound needs a random scenario; leaving the columns empty");
        return Ok(vec![(None, None); points.len()]);
    };
    let mut cache: Vec<((f64, f64), (Option<f64>, Option<f64>))> = Vec::new();
    let mut out = Vec::with_capacity(points.len());
    for pt in points {
        let key = (pt.bandwidth, pt.frame_duration);
        if let Some((_, b)) = cache.iter().find(|(k, _)| *k == key) {
            out.push(*b);
            continue;
        }
        // bound streams count down from the top, clear of the per-run streams
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::MAX - cache.len() as u64);
        let f = fisher_matrix(&cfg.crlb_config, &pt.grid(&cfg.grid), params, &mut rng)?;
        let c = joint_crlb(&f)?;
        let b = (Some(c.position.sqrt()), Some(c.velocity.sqrt()));
        cache.push((key, b));
        out.push(b);
    }
    Ok(out)
}

fn write_log_line<W: Write>(out: &mut W, p: usize, pt: &SweepPoint, o: &RunOutcome) -> Result<()> {
    write!(out, "point={p} B={} Tf={} mode={:?} L={} I_mu={} I_alpha={} run={} ", pt.bandwidth, pt.frame_duration, pt.mode, pt.turbo_iterations, pt.bp_iterations, pt.gd_max_iterations, o.run)?;
    match &o.estimate {
        Ok(e) => writeln!(
            out,
            "{} residual={:.6e} restarts={} gd_iterations={} map_errors={} velocity_degenerate={} seconds={:.3}",
            if o.converged { "ok" } else { "unconverged" },
            e.residual,
            e.restarts,
            e.gd_iterations(),
            o.map_errors.unwrap_or(0),
            e.velocity_degenerate,
            o.seconds
        )?,
        Err(msg) => writeln!(out, "failed {msg} seconds={:.3}", o.seconds)?,
    }
    Ok(())
}

pub fn write_records<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::SweepAxes;
    use crate::geometry::ScenarioParams;
    use crate::experiments::config::ScenarioSource;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            scenario: ScenarioSource::Random(ScenarioParams { n: 6, ..Default::default() }),
            runs: 3,
            sweep: SweepAxes { bandwidths: vec![30e6, 300e6], turbo_iterations: vec![0, 1], ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn one_point_one_run_gives_one_record() {
        let cfg = ExperimentConfig {
            runs: 1,
            sweep: SweepAxes { modes: vec![TipMode::ColdStart], ..Default::default() },
            scenario: ScenarioSource::Random(ScenarioParams { n: 5, ..Default::default() }),
            ..Default::default()
        };
        let recs = run_sweep(&cfg).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].runs, 1);
    }

    #[test]
    fn genie_points_collapse_solver_axes() {
        let pts = sweep_points(&small());
        // 2 bandwidths x (2 turbo settings + 1 genie)
        assert_eq!(pts.len(), 6);
        assert_eq!(pts.iter().filter(|p| p.mode == TipMode::GenieAided).count(), 2);
    }

    #[test]
    fn csv_is_reproducible_and_parses_back() {
        let cfg = small();
        let strip = |recs: Vec<RunRecord>| -> Vec<RunRecord> { recs.into_iter().map(|r| RunRecord { wall_time_s: 0.0, ..r }).collect() };
        let a = strip(run_sweep(&cfg).unwrap());
        let b = strip(run_sweep(&cfg).unwrap());
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_records(&a, &mut x).unwrap();
        write_records(&b, &mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(read_records(&x[..]).unwrap(), a);
        for r in &a {
            assert_eq!(r.runs, cfg.runs);
            assert!(r.rmse_p_m.unwrap() >= 0.0 && r.rmse_v_mps.unwrap() >= 0.0);
        }
    }

    #[test]
    fn failures_are_counted_and_excluded() {
        let point = sweep_points(&small())[0];
        let swarm = crate::geometry::sample_random_swarm(&ScenarioParams { n: 6, ..Default::default() }, &mut run_rng(1, 0, 0)).unwrap();
        let good = run_single(&small(), &point, &swarm, 0);
        let bad = RunOutcome { run: 1, truth: swarm.clone(), estimate: Err("boom".into()), converged: false, map_errors: None, seconds: 0.0 };
        let rec = aggregate(&point, &[good.clone(), bad]).unwrap();
        let alone = aggregate(&point, &[good]).unwrap();
        assert_eq!((rec.runs, rec.failures), (2, 1));
        assert_eq!(rec.runs - rec.failures, 1);
        assert_eq!(rec.rmse_p_m, alone.rmse_p_m);
        let none = aggregate(&point, &[RunOutcome { run: 0, truth: swarm, estimate: Err("x".into()), converged: false, map_errors: None, seconds: 0.0 }]).unwrap();
        assert_eq!((none.failures, none.rmse_p_m), (1, None));
    }
}
