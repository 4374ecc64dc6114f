//! Writes a measurement set to the plain-text format and reads it back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmloc::geometry::{sample_random_swarm, ScenarioParams};
use swarmloc::measurement::{build_measurements, read_measurements, write_measurements};
use swarmloc::OtfsGridConfig;

fn main() -> swarmloc::Result<()> {
    let params = ScenarioParams { n: 5, ..Default::default() };
    let swarm = sample_random_swarm(&params, &mut ChaCha8Rng::seed_from_u64(1))?;
    let meas = build_measurements(&swarm, &OtfsGridConfig::default())?;

    let mut text = Vec::new();
    write_measurements(&meas, &mut text)?;
    let shown = String::from_utf8_lossy(&text);
    for line in shown.lines().take(12) {
        println!("{line}");
    }
    println!("... {} lines in total", shown.lines().count());

    let back = read_measurements(text.as_slice())?;
    assert_eq!(back, meas);
    println!("round trip ok");
    Ok(())
}
