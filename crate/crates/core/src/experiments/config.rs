//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crlb::CrlbConfig;
use crate::error::{Error, Result};
use crate::geometry::{default_anchors, load_trace, sample_random_swarm, ScenarioParams, SwarmState, TraceSnapshot, Vec3};
use crate::measurement::OtfsGridConfig;
use crate::tip::{TipConfig, TipMode};

/// Where the swarms come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    Random(ScenarioParams),
    Trace(TraceSource),
}

impl Default for ScenarioSource {
    fn default() -> Self {
        Self::Random(ScenarioParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceSource {
    /// CSV with `t,id,x,y,z` rows.
    pub path: PathBuf,
    pub cube_side: f64,
    pub cube_center: Vec3,
    pub anchor_positions: Vec<Vec3>,
    /// Trace UAVs used per snapshot, added after the anchors.
    pub mobile: usize,
}

impl Default for TraceSource {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            cube_side: 1000.0,
            cube_center: Vec3::new(500.0, 500.0, 500.0),
            anchor_positions: default_anchors(),
            mobile: 4,
        }
    }
}

/// Loaded scenario, ready to hand out one swarm per run.
#[derive(Debug, Clone)]
pub enum Scenario {
    Random(ScenarioParams),
    Trace { source: TraceSource, snapshots: Vec<TraceSnapshot> },
}

impl Scenario {
    pub fn load(src: &ScenarioSource) -> Result<Self> {
        match src {
            ScenarioSource::Random(p) => Ok(Self::Random(p.clone())),
            ScenarioSource::Trace(t) => {
                let snapshots = load_trace(&t.path, t.cube_side, t.cube_center, t.mobile)?;
                if snapshots.is_empty() {
                    return Err(Error::Config(format!("trace {} has no complete snapshot", t.path.display())));
                }
                Ok(Self::Trace { source: t.clone(), snapshots })
            }
        }
    }

    /// Swarm of run `run`; random scenarios draw from `rng`, traces cycle
    /// through their snapshots.
    pub fn swarm<R: rand::Rng + ?Sized>(&self, run: usize, rng: &mut R) -> Result<SwarmState> {
        match self {
            Self::Random(p) => sample_random_swarm(p, rng),
            Self::Trace { source, snapshots } => snapshots[run % snapshots.len()].to_swarm(&source.anchor_positions, source.mobile),
        }
    }

    /// Gaussian prior used by the bound; only random scenarios have one.
    pub fn params(&self) -> Option<&ScenarioParams> {
        match self {
            Self::Random(p) => Some(p),
            Self::Trace { .. } => None,
        }
    }
}

/// Values taken by each swept parameter. The sweep is their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepAxes {
    pub bandwidths: Vec<f64>,
    pub frame_durations: Vec<f64>,
    pub turbo_iterations: Vec<usize>,
    pub bp_iterations: Vec<usize>,
    pub modes: Vec<TipMode>,
    /// Gradient-descent iteration caps I_alpha.
    pub gd_max_iterations: Vec<usize>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        let grid = OtfsGridConfig::default();
        let tip = TipConfig::default();
        Self {
            bandwidths: vec![grid.bandwidth],
            frame_durations: vec![grid.frame_duration],
            turbo_iterations: vec![tip.turbo_iterations],
            bp_iterations: vec![tip.bp.iterations],
            modes: vec![TipMode::ColdStart, TipMode::GenieAided],
            gd_max_iterations: vec![tip.gd.max_iterations],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    pub epochs: usize,
    /// Upper end of the Lissajous amplitude range (m).
    pub amplitude_max: f64,
    /// Upper end of the Lissajous angular-rate range (rad/s).
    pub rate_max: f64,
    /// Angular error above which an epoch counts as a bad velocity (deg).
    pub bad_angle_deg: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self { epochs: 50, amplitude_max: 1000.0, rate_max: 0.2, bad_angle_deg: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    /// Base grid; bandwidth and frame duration are overridden by the sweep.
    pub grid: OtfsGridConfig,
    /// Base solver settings; swept fields are overridden per point.
    pub tip: TipConfig,
    pub sweep: SweepAxes,
    pub runs: usize,
    pub seed: u64,
    /// CSV destination; stdout when absent.
    pub output: Option<PathBuf>,
    /// Per-run diagnostic log.
    pub log: Option<PathBuf>,
    /// Append the bound to each sweep row.
    pub crlb: bool,
    pub crlb_config: CrlbConfig,
    pub tracking: TrackingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSource::default(),
            grid: OtfsGridConfig::default(),
            tip: TipConfig::default(),
            sweep: SweepAxes::default(),
            runs: 100,
            seed: 1,
            output: None,
            log: None,
            crlb: false,
            crlb_config: CrlbConfig::default(),
            tracking: TrackingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The CI profile: 20 runs of a six-UAV swarm.
    pub fn fast(mut self) -> Self {
        self.runs = 20;
        if let ScenarioSource::Random(p) = &mut self.scenario {
            p.n = 6;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        let s = &self.sweep;
        let sizes = [
            ("bandwidths", s.bandwidths.len()),
            ("frame_durations", s.frame_durations.len()),
            ("turbo_iterations", s.turbo_iterations.len()),
            ("bp_iterations", s.bp_iterations.len()),
            ("modes", s.modes.len()),
            ("gd_max_iterations", s.gd_max_iterations.len()),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, n)| *n == 0) {
            return Err(Error::Config(format!("sweep axis {name} is empty")));
        }
        if s.modes.contains(&TipMode::Tracking) {
            return Err(Error::Config("tracking mode is not a sweep mode; use the tracking demo".into()));
        }
        for &b in &s.bandwidths {
            for &t in &s.frame_durations {
                OtfsGridConfig { bandwidth: b, frame_duration: t, ..self.grid }.validate()?;
            }
        }
        if s.gd_max_iterations.contains(&0) {
            return Err(Error::Config("gradient descent needs at least one iteration".into()));
        }
        self.tip.validate()?;
        if self.tracking.epochs == 0 {
            return Err(Error::Config("tracking needs at least one epoch".into()));
        }
        Ok(())
    }
}
