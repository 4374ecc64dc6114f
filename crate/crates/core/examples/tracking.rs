//! Tracking a swarm on Lissajous paths at two bandwidths.

use swarmloc::experiments::{run_tracking_demo, ExperimentConfig, TrackingConfig};
use swarmloc::tip::{TipConfig, TipMode};
use swarmloc::OtfsGridConfig;

fn main() -> swarmloc::Result<()> {
    for b in [300e6, 3e6] {
        let cfg = ExperimentConfig {
            grid: OtfsGridConfig { bandwidth: b, ..Default::default() }.with_round_c(),
            tip: TipConfig { turbo_iterations: 5, mode: TipMode::Tracking, ..Default::default() },
            tracking: TrackingConfig { epochs: 30, ..Default::default() },
            ..Default::default()
        };
        let demo = run_tracking_demo(&cfg)?;
        let s = &demo.summary;
        println!(
            "B = {:>3} MHz: median error {:.2} m (max {:.2} m), median heading error {:.1} deg, {:.0}% of fixes off by more than 30 deg",
            b / 1e6,
            s.median_position_error_m.unwrap_or(f64::NAN),
            s.max_position_error_m.unwrap_or(f64::NAN),
            s.median_velocity_angle_deg.unwrap_or(f64::NAN),
            100.0 * s.bad_velocity_fraction
        );
        let last = demo.records.iter().rfind(|r| !r.anchor).unwrap();
        println!("  last fix, uav {}: true ({:.1}, {:.1}, {:.1}) est ({:.1}, {:.1}, {:.1})", last.uav, last.x, last.y, last.z, last.est_x, last.est_y, last.est_z);
    }
    Ok(())
}
