use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use explore_core::mission::{run_mission, write_outputs, MissionConfig, Termination};
use explore_core::SensorKind;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sensor {
    Lidar,
    Depth,
}

/// Runs one headless exploration mission and writes its metrics and artifacts.
#[derive(Debug, Parser)]
#[command(name = "explore", version)]
struct Args {
    /// Scene file, or `depot_analog` for the built-in warehouse.
    #[arg(long)]
    scene: Option<String>,
    /// `key = value` config applied on top of the sensor preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter preset.
    #[arg(long, value_enum, default_value_t = Sensor::Lidar)]
    sensor: Sensor,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulated time limit in seconds.
    #[arg(long)]
    max_time: Option<f64>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut cfg = MissionConfig::preset(match args.sensor {
        Sensor::Lidar => SensorKind::Lidar,
        Sensor::Depth => SensorKind::DepthCamera,
    });
    if let Some(path) = &args.config {
        cfg.load(path).with_context(|| format!("loading config {}", path.display()))?;
    }
    if let Some(scene) = &args.scene {
        cfg.scene = (scene != "depot_analog").then(|| PathBuf::from(scene));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    if let Some(t) = args.max_time {
        cfg.max_sim_time = t;
    }
    let Some(out_dir) = cfg.out.clone() else {
        bail!("no output directory: pass --out or set `out` in the config");
    };

    let result = run_mission(&cfg)?;
    write_outputs(&out_dir, &result)?;

    let r = &result.report;
    println!("termination      {}", serde_json::to_string(&r.termination)?);
    println!("sim time         {:.2} s", r.sim_time);
    println!(
        "observed         {} voxels, {:.2}% of observable",
        r.observed_voxels,
        100.0 * r.fraction
    );
    if let (Some(rmse), Some(c2), Some(c4)) = (r.rmse, r.completeness_02, r.completeness_04) {
        println!("reconstruction   rmse {rmse:.4} m, completeness {c2:.2}% (0.2 m) {c4:.2}% (0.4 m)");
    }
    if let Some(c) = r.min_clearance {
        println!("min clearance    {c:.3} m");
    }
    println!("submaps          {} ({} loop closures)", r.submaps, r.loop_closures.len());
    println!(
        "wall time        {:.1} s (frontiers {:.1}, planning {:.1}, utility {:.1}, sensing {:.1})",
        r.timing.total_s, r.timing.frontier_s, r.timing.planning_s, r.timing.utility_s, r.timing.sensing_s
    );
    println!("outputs          {}", out_dir.display());
    if matches!(r.termination, Termination::Collision) {
        std::process::exit(2);
    }
    Ok(())
}
