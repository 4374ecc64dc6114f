//! Epoch-by-epoch tracking over Lissajous trajectories or a recorded trace.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario};
use super::metrics::{angle_deg, median};
use super::sweep::run_rng;
use crate::error::{Error, Result};
use crate::geometry::{sample_random_swarm, LissajousParams, SwarmState, Vec3};
use crate::measurement::build_measurements_with;
use crate::positioning::AnchorSet;
use crate::tip::{forecast, run_cold_start, run_tracking_step, EstimationResult, TipConfig, TipMode};

/// One UAV at one epoch, in plot-ready columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub time_s: f64,
    pub uav: usize,
    pub anchor: bool,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub est_vx: f64,
    pub est_vy: f64,
    pub est_vz: f64,
    /// Position predicted for the next epoch.
    pub forecast_x: f64,
    pub forecast_y: f64,
    pub forecast_z: f64,
    pub position_error_m: f64,
    /// Empty when either velocity is zero.
    pub velocity_angle_deg: Option<f64>,
    pub residual: f64,
    /// The restart budget ran out and the best attempt was kept.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingSummary {
    pub epochs: usize,
    pub failed_epochs: usize,
    pub median_position_error_m: Option<f64>,
    pub max_position_error_m: Option<f64>,
    pub median_velocity_angle_deg: Option<f64>,
    /// Fraction of non-anchor UAV-epochs whose velocity is off by more than the configured angle.
    pub bad_velocity_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrackingDemo {
    pub records: Vec<EpochRecord>,
    pub summary: TrackingSummary,
}

/// Ground truth for each epoch, with its time stamp. Random scenarios move
/// each mobile UAV on a Lissajous curve around a center drawn from the
/// scenario prior.
fn truth_sequence(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<(f64, SwarmState)>> {
    let t = &cfg.tracking;
    match scenario {
        Scenario::Random(params) => {
            let a = params.anchor_count();
            let mut rng = run_rng(cfg.seed, 0, 0);
            let centers = sample_random_swarm(params, &mut rng)?.positions();
            let fixed: Vec<bool> = (0..params.n).map(|i| i < a).collect();
            let curves = LissajousParams::random(centers, &fixed, t.amplitude_max, t.rate_max, &mut rng)?;
            (0..t.epochs)
                .map(|e| {
                    let time = e as f64 * cfg.tip.dt;
                    Ok((time, curves.swarm_at(time, a)?))
                })
                .collect()
        }
        Scenario::Trace { source, snapshots } => snapshots
            .iter()
            .take(t.epochs)
            .map(|s| Ok((s.time, s.to_swarm(&source.anchor_positions, source.mobile)?)))
            .collect(),
    }
}

/// Cold start on the first epoch, then one tracking step per epoch with the
/// previous forecast as prior. A step that exhausts its restarts keeps its best
/// attempt and is flagged.
pub fn run_tracking_demo(cfg: &ExperimentConfig) -> Result<TrackingDemo> {
    cfg.validate()?;
    let scenario = Scenario::load(&cfg.scenario)?;
    let truth = truth_sequence(cfg, &scenario)?;
    if truth.is_empty() {
        return Err(Error::Config("no epochs to track".into()));
    }
    let anchors = AnchorSet::from_swarm(&truth[0].1);
    let mut noise = run_rng(cfg.seed, 0, 1);
    let mut solver = run_rng(cfg.seed, 0, 2);

    let mut records = Vec::new();
    let mut failed_epochs = 0;
    let mut prior: Option<Vec<Vec3>> = None;
    for (e, (time, swarm)) in truth.iter().enumerate() {
        let dt = truth.get(e + 1).map_or(cfg.tip.dt, |(t1, _)| t1 - time);
        let tip = TipConfig { dt, mode: if prior.is_some() { TipMode::Tracking } else { TipMode::ColdStart }, ..cfg.tip };
        let meas = build_measurements_with(swarm, &cfg.grid, &mut noise)?;
        let step = match &prior {
            None => run_cold_start(&meas, &anchors, &tip, &mut solver),
            Some(p) => run_tracking_step(&meas, p, &anchors, &tip, &mut solver).map(|(r, _)| r),
        };
        let (est, failed) = match step {
            Ok(r) => (r, false),
            Err(Error::TipFailed { best }) => (*best, true),
            Err(e) => return Err(e),
        };
        failed_epochs += failed as usize;
        let next = forecast(&est, dt);
        push_epoch(&mut records, e, *time, swarm, &est, &next, failed);
        prior = Some(next);
    }

    let mobile: Vec<&EpochRecord> = records.iter().filter(|r| !r.anchor).collect();
    let pos: Vec<f64> = mobile.iter().map(|r| r.position_error_m).collect();
    let ang: Vec<f64> = mobile.iter().filter_map(|r| r.velocity_angle_deg).collect();
    let bad = mobile.iter().filter(|r| r.velocity_angle_deg.is_some_and(|a| a > cfg.tracking.bad_angle_deg)).count();
    let summary = TrackingSummary {
        epochs: truth.len(),
        failed_epochs,
        median_position_error_m: median(&pos),
        max_position_error_m: pos.iter().copied().reduce(f64::max),
        median_velocity_angle_deg: median(&ang),
        bad_velocity_fraction: if mobile.is_empty() { 0.0 } else { bad as f64 / mobile.len() as f64 },
    };
    Ok(TrackingDemo { records, summary })
}

fn push_epoch(out: &mut Vec<EpochRecord>, epoch: usize, time: f64, swarm: &SwarmState, est: &EstimationResult, next: &[Vec3], failed: bool) {
    for (i, u) in swarm.uavs().iter().enumerate() {
        let (p, v, q, w, f) = (u.position, u.velocity, est.positions[i], est.velocities[i], next[i]);
        out.push(EpochRecord {
            epoch,
            time_s: time,
            uav: i,
            anchor: u.is_anchor,
            x: p.x,
            y: p.y,
            z: p.z,
            vx: v.x,
            vy: v.y,
            vz: v.z,
            est_x: q.x,
            est_y: q.y,
            est_z: q.z,
            est_vx: w.x,
            est_vy: w.y,
            est_vz: w.z,
            forecast_x: f.x,
            forecast_y: f.y,
            forecast_z: f.z,
            position_error_m: (q - p).norm(),
            velocity_angle_deg: angle_deg(&w, &v),
            residual: est.residual,
            failed,
        });
    }
}

pub fn write_epochs<W: Write>(records: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::TrackingConfig;

    #[test]
    fn static_swarm_forecast_equals_estimate() {
        let cfg = ExperimentConfig { tracking: TrackingConfig { epochs: 5, amplitude_max: 0.0, ..Default::default() }, ..Default::default() };
        let demo = run_tracking_demo(&cfg).unwrap();
        assert_eq!(demo.records.len(), 5 * 8);
        for r in &demo.records {
            assert_eq!((r.forecast_x, r.forecast_y, r.forecast_z), (r.est_x, r.est_y, r.est_z));
            assert_eq!(r.velocity_angle_deg, None);
        }
    }

    #[test]
    fn epochs_csv_has_one_row_per_uav_epoch() {
        let cfg = ExperimentConfig { tracking: TrackingConfig { epochs: 3, ..Default::default() }, ..Default::default() };
        let demo = run_tracking_demo(&cfg).unwrap();
        let mut buf = Vec::new();
        write_epochs(&demo.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 8);
        assert!(text.starts_with("epoch,time_s,uav,anchor,x,y,z"));
    }
}
