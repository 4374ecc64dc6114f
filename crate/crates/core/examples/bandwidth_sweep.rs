//! Small Monte-Carlo sweep over bandwidth and TIP iterations, written as CSV
//! to stdout.

use swarmloc::experiments::{run_sweep, write_records, ExperimentConfig, SweepAxes};
use swarmloc::tip::TipMode;
use swarmloc::OtfsGridConfig;

fn main() -> swarmloc::Result<()> {
    let cfg = ExperimentConfig {
        grid: OtfsGridConfig::default().with_round_c(),
        runs: 20,
        crlb: true,
        sweep: SweepAxes {
            bandwidths: vec![3e6, 30e6, 300e6],
            turbo_iterations: vec![0, 2],
            modes: vec![TipMode::ColdStart, TipMode::GenieAided],
            ..Default::default()
        },
        ..Default::default()
    };
    let records = run_sweep(&cfg)?;
    write_records(&records, std::io::stdout())?;
    Ok(())
}
