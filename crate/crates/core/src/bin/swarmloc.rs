use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swarmloc::crlb::{fisher_matrix, joint_crlb};
use swarmloc::experiments::{oracle, run_rng, run_sweep, run_tracking_demo, write_epochs, write_records, ExperimentConfig, Scenario};
use swarmloc::measurement::{build_measurements_with, NoiseModel};
use swarmloc::positioning::AnchorSet;
use swarmloc::tip::{run_cold_start, run_genie_aided, TipMode};

#[derive(Parser)]
#[command(version, about = "Swarm localization from quantized delay-Doppler profiles")]
struct Cli {
    /// TOML experiment file.
    #[arg(long, env = "SWARMLOC_CONFIG", global = true)]
    config: Option<PathBuf>,
    /// 20 runs of a six-UAV swarm.
    #[arg(long, global = true)]
    fast: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Swarm size, anchors included.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Bandwidth in Hz; replaces the bandwidth axis of a sweep.
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    /// Frame duration in s; replaces the frame-duration axis of a sweep.
    #[arg(long, global = true)]
    frame_duration: Option<f64>,
    #[arg(long, global = true)]
    turbo_iterations: Option<usize>,
    #[arg(long, global = true)]
    bp_iterations: Option<usize>,
    /// quantized, gaussian or noiseless.
    #[arg(long, global = true)]
    noise: Option<NoiseModel>,
    /// Use c = 3e8 m/s.
    #[arg(long, global = true)]
    round_c: bool,
    /// CSV output file (stdout otherwise).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Per-run diagnostic log.
    #[arg(long, global = true)]
    log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localize one random swarm from scratch.
    ColdStart {
        /// Use the true maps instead of BP.
        #[arg(long)]
        genie: bool,
    },
    /// Track a Lissajous swarm (or replay a trace) epoch by epoch.
    Tracking {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Bound on position and velocity RMSE for each grid of the sweep.
    Crlb,
    /// Monte-Carlo sweep; one CSV row per point.
    Sweep {
        /// Add the bound columns.
        #[arg(long)]
        crlb: bool,
    },
    /// Finite-difference, identity and exhaustive-search checks.
    OracleCheck,
}

fn config(cli: &Cli) -> swarmloc::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.fast {
        cfg = cfg.fast();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.runs {
        cfg.runs = r;
    }
    if let (Some(n), swarmloc::experiments::ScenarioSource::Random(p)) = (cli.n, &mut cfg.scenario) {
        p.n = n;
    }
    if let Some(b) = cli.bandwidth {
        cfg.grid.bandwidth = b;
        cfg.sweep.bandwidths = vec![b];
    }
    if let Some(t) = cli.frame_duration {
        cfg.grid.frame_duration = t;
        cfg.sweep.frame_durations = vec![t];
    }
    if let Some(l) = cli.turbo_iterations {
        cfg.tip.turbo_iterations = l;
        cfg.sweep.turbo_iterations = vec![l];
    }
    if let Some(i) = cli.bp_iterations {
        cfg.tip.bp.iterations = i;
        cfg.sweep.bp_iterations = vec![i];
    }
    if let Some(noise) = cli.noise {
        cfg.grid.noise = noise;
    }
    if cli.round_c {
        cfg.grid = cfg.grid.with_round_c();
    }
    if cli.output.is_some() {
        cfg.output.clone_from(&cli.output);
    }
    if cli.log.is_some() {
        cfg.log.clone_from(&cli.log);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sink(cfg: &ExperimentConfig) -> swarmloc::Result<Box<dyn Write>> {
    Ok(match &cfg.output {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: &Cli) -> swarmloc::Result<bool> {
    let mut cfg = config(cli)?;
    match &cli.command {
        Command::ColdStart { genie } => {
            let scenario = Scenario::load(&cfg.scenario)?;
            let swarm = scenario.swarm(0, &mut run_rng(cfg.seed, 0, 0))?;
            let meas = build_measurements_with(&swarm, &cfg.grid, &mut run_rng(cfg.seed, 0, 1))?;
            let anchors = AnchorSet::from_swarm(&swarm);
            let mut rng = run_rng(cfg.seed, 0, 2);
            let est = if *genie { run_genie_aided(&meas, &anchors, &cfg.tip, &mut rng)? } else { run_cold_start(&meas, &anchors, &cfg.tip, &mut rng)? };
            println!("residual {:.4e} m^2, restarts {}, GD iterations {}", est.residual, est.restarts, est.gd_iterations());
            println!("uav anchor  position_error_m  velocity_error_mps");
            for (i, u) in swarm.uavs().iter().enumerate() {
                println!("{i:>3} {:>6}  {:>16.4}  {:>18.4}", u.is_anchor, (est.positions[i] - u.position).norm(), (est.velocities[i] - u.velocity).norm());
            }
            Ok(true)
        }
        Command::Tracking { epochs } => {
            if let Some(e) = epochs {
                cfg.tracking.epochs = *e;
            }
            cfg.tip.mode = TipMode::Tracking;
            let demo = run_tracking_demo(&cfg)?;
            write_epochs(&demo.records, sink(&cfg)?)?;
            let s = &demo.summary;
            eprintln!(
                "epochs {} (failed {}), median position error {:.3} m, median velocity angle {:.2} deg, bad velocity share {:.3}",
                s.epochs,
                s.failed_epochs,
                s.median_position_error_m.unwrap_or(f64::NAN),
                s.median_velocity_angle_deg.unwrap_or(f64::NAN),
                s.bad_velocity_fraction
            );
            Ok(true)
        }
        Command::Crlb => {
            let scenario = Scenario::load(&cfg.scenario)?;
            let params = scenario.params().ok_or_else(|| swarmloc::Error::Config("the bound needs a random scenario".into()))?;
            let mut out = sink(&cfg)?;
            writeln!(out, "bandwidth_hz,frame_duration_s,crlb_p_m,crlb_v_mps,degenerate,relative_std_error")?;
            for &b in &cfg.sweep.bandwidths {
                for &t in &cfg.sweep.frame_durations {
                    let grid = swarmloc::OtfsGridConfig { bandwidth: b, frame_duration: t, ..cfg.grid };
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    let f = fisher_matrix(&cfg.crlb_config, &grid, params, &mut rng)?;
                    let c = joint_crlb(&f)?;
                    writeln!(out, "{b},{t},{},{},{},{}", c.position.sqrt(), c.velocity.sqrt(), c.degenerate, f.relative_std_error)?;
                }
            }
            Ok(true)
        }
        Command::Sweep { crlb } => {
            cfg.crlb |= *crlb;
            let out = cfg.output.take();
            let records = run_sweep(&cfg)?;
            cfg.output = out;
            write_records(&records, sink(&cfg)?)?;
            Ok(true)
        }
        Command::OracleCheck => {
            let reports = oracle::run_all(cfg.seed)?;
            for r in &reports {
                println!("{} {:<34} value {:.3e} threshold {:.1e} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.value, r.threshold, r.detail);
            }
            Ok(reports.iter().all(|r| r.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
