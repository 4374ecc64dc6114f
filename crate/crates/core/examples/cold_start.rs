//! One cold-start estimate on a random swarm, with and without the true maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmloc::geometry::{sample_random_swarm, ScenarioParams};
use swarmloc::measurement::build_measurements;
use swarmloc::positioning::AnchorSet;
use swarmloc::tip::{run_cold_start, run_genie_aided, TipConfig};
use swarmloc::OtfsGridConfig;

fn main() -> swarmloc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let swarm = sample_random_swarm(&ScenarioParams::default(), &mut rng)?;
    let grid = OtfsGridConfig { bandwidth: 30e6, ..Default::default() }.with_round_c();
    let meas = build_measurements(&swarm, &grid)?;
    let anchors = AnchorSet::from_swarm(&swarm);
    let cfg = TipConfig::default();

    let tip = run_cold_start(&meas, &anchors, &cfg, &mut rng)?;
    let ga = run_genie_aided(&meas, &anchors, &cfg, &mut rng)?;
    println!("map entries wrong: {}", tip.maps.count_differences(&meas.truth_maps));
    println!("uav  tip_err_m  ga_err_m  tip_verr_mps");
    for u in swarm.uavs().iter().filter(|u| !u.is_anchor) {
        println!(
            "{:>3}  {:>9.3}  {:>8.3}  {:>12.3}",
            u.id,
            (tip.positions[u.id] - u.position).norm(),
            (ga.positions[u.id] - u.position).norm(),
            (tip.velocities[u.id] - u.velocity).norm()
        );
    }
    println!("residual {:.1} m^2 after {} restarts", tip.residual, tip.restarts);
    Ok(())
}
