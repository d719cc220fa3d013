//! Ground truth, a multi-IMU rig and camera landmark frames for one seed,
//! written as CSV to a directory.
//!
//!     cargo run --example simulate_world -- [out_dir] [seed]

use std::path::PathBuf;

use vimu::io::{ground_truth_to_string, interleave, landmarks_to_string, stream_to_string, write_atomic};
use vimu::scenario::{RigPreset, Scenario};
use vimu::sim::synth_multi_imu;
use vimu::ImuSample;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "sim_out".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    std::fs::create_dir_all(&out)?;

    let scenario = Scenario::default();
    let gt = scenario.ground_truth()?;
    let end = gt.last();
    println!(
        "{} truth samples at {} Hz; final position ({:.1}, {:.1}, {:.1}) m",
        gt.len(),
        gt.rate_hz,
        end.position.x,
        end.position.y,
        end.position.z
    );

    let preset = RigPreset::A4;
    let rig = scenario.rig(preset, seed);
    for (id, imu) in &rig {
        let p = imu.extrinsics.position;
        println!("IMU {id:>2} at ({:+.3}, {:+.3}, {:+.3}) m", p.x, p.y, p.z);
    }
    let synth = synth_multi_imu(&gt, &rig.iter().map(|(_, r)| *r).collect::<Vec<_>>(), seed)?;
    let streams: Vec<(u32, &[ImuSample])> = rig.iter().map(|(id, _)| *id).zip(synth.streams.iter().map(|s| s.as_slice())).collect();

    let frames = scenario.camera_frames(&gt, seed)?;
    let n_obs: usize = frames.iter().map(|f| f.observations.len()).sum();
    println!("{} camera frames, {n_obs} landmark observations", frames.len());

    write_atomic(&out.join("ground_truth.csv"), ground_truth_to_string(&gt).as_bytes())?;
    write_atomic(&out.join("imu_streams.csv"), stream_to_string(&interleave(&streams)).as_bytes())?;
    write_atomic(&out.join("landmarks.csv"), landmarks_to_string(&frames).as_bytes())?;
    println!("wrote {}/{{ground_truth,imu_streams,landmarks}}.csv", out.display());
    Ok(())
}
