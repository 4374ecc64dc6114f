//! Monte-Carlo harness: configuration, metrics, sweeps, tracking demos and
//! the oracle suite.

mod config;
mod metrics;
pub mod oracle;
mod sweep;
mod tracking;

pub use config::{ExperimentConfig, Scenario, ScenarioSource, SweepAxes, TraceSource, TrackingConfig};
pub use metrics::{angle_deg, median, rmse, rmse_position, rmse_velocity};
pub use sweep::{aggregate, draw_swarms, read_records, run_rng, run_single, run_sweep, sweep_points, write_records, RunOutcome, RunRecord, SweepPoint};
pub use tracking::{run_tracking_demo, write_epochs, EpochRecord, TrackingDemo, TrackingSummary};
