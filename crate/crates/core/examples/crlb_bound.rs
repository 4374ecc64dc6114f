//! Joint Cramér-Rao bound against bandwidth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmloc::crlb::{fisher_matrix, joint_crlb, CrlbConfig};
use swarmloc::geometry::ScenarioParams;
use swarmloc::OtfsGridConfig;

fn main() -> swarmloc::Result<()> {
    let scenario = ScenarioParams::default();
    let cfg = CrlbConfig::default();
    println!("bandwidth_mhz  crlb_p_m  crlb_v_mps  rel_std_err");
    for b in [3e6, 10e6, 30e6, 100e6, 300e6] {
        let grid = OtfsGridConfig { bandwidth: b, ..Default::default() }.with_round_c();
        let f = fisher_matrix(&cfg, &grid, &scenario, &mut ChaCha8Rng::seed_from_u64(0))?;
        let c = joint_crlb(&f)?;
        println!("{:>13}  {:>8.3}  {:>10.4}  {:>11.4}", b / 1e6, c.position.sqrt(), c.velocity.sqrt(), f.relative_std_error);
    }
    Ok(())
}
