//! Tracks the UAVs of a recorded trace, rescaled into the flight cube.
//!
//! Usage: `cargo run --example trace_replay -- [trace.csv]`

use std::path::PathBuf;

use swarmloc::experiments::{run_tracking_demo, ExperimentConfig, ScenarioSource, TraceSource, TrackingConfig};
use swarmloc::tip::{TipConfig, TipMode};
use swarmloc::OtfsGridConfig;

fn main() -> swarmloc::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data/synthetic_trace.csv")));
    let cfg = ExperimentConfig {
        scenario: ScenarioSource::Trace(TraceSource { path, ..Default::default() }),
        grid: OtfsGridConfig { bandwidth: 100e6, ..Default::default() }.with_round_c(),
        tip: TipConfig { turbo_iterations: 3, mode: TipMode::Tracking, ..Default::default() },
        tracking: TrackingConfig { epochs: 20, ..Default::default() },
        ..Default::default()
    };
    let demo = run_tracking_demo(&cfg)?;
    println!("epoch  time_s  mean_error_m");
    for e in 0..demo.summary.epochs {
        let rows: Vec<_> = demo.records.iter().filter(|r| r.epoch == e && !r.anchor).collect();
        let mean = rows.iter().map(|r| r.position_error_m).sum::<f64>() / rows.len() as f64;
        println!("{e:>5}  {:>6.1}  {mean:>12.3}", rows[0].time_s);
    }
    println!("median {:.3} m", demo.summary.median_position_error_m.unwrap_or(f64::NAN));
    Ok(())
}
