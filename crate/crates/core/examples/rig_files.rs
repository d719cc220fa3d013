//! Rig and scenario files: load, validate, solve the VIMU and write the
//! normalized rig back out.
//!
//!     cargo run --example rig_files -- [rig.toml] [scenario.toml]

use std::path::PathBuf;

use vimu::fusion::{GyroWeighting, VimuConfig};
use vimu::io::{load_rig, load_scenario, rig_to_string};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name)
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let rig_path = args.next().map(PathBuf::from).unwrap_or_else(|| data("cross_rig.toml"));
    let scenario_path = args.next().map(PathBuf::from).unwrap_or_else(|| data("short_run.toml"));

    let rig = load_rig(&rig_path)?;
    println!("{}: {} IMUs, target {:?}", rig_path.display(), rig.ids.len(), rig.target.as_slice());
    let cfg = VimuConfig::solve(rig.extrinsics.clone(), &rig.noise, GyroWeighting::NoiseOnly)?;
    println!("{:>4} {:>22} {:>9} {:>9}", "id", "position (target frame)", "w_gyro", "w_accel");
    for (k, id) in rig.ids.iter().enumerate() {
        let p = rig.extrinsics[k].position;
        println!(
            "{id:>4}   ({:+.3}, {:+.3}, {:+.3}) {:>9.4} {:>9.4}",
            p.x, p.y, p.z, cfg.w_gyro[k], cfg.w_accel[k]
        );
    }
    let n = &cfg.fused_noise;
    println!("fused σ_g {:.5} rad/s, σ_a {:.5} m/s²\n", n.sigma_g, n.sigma_a);

    // The validated rig written back: rotation matrices, explicit target and noise.
    println!("{}", rig_to_string(&rig.to_file()).lines().take(12).collect::<Vec<_>>().join("\n"));
    println!("...\n");

    let scenario = load_scenario(&scenario_path)?;
    println!(
        "{}: {} s at {} Hz, camera {} Hz × {} landmarks, gyro weighting {:?}",
        scenario_path.display(),
        scenario.trajectory.duration_s,
        scenario.imu_rate_hz,
        scenario.observations.rate_hz,
        scenario.observations.landmarks_per_frame,
        scenario.gyro_weighting
    );
    Ok(())
}
