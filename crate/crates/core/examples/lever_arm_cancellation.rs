//! A spinning, accelerating rig: each IMU feels a different specific force,
//! but the placement-weighted average reproduces the one at the target.
//!
//!     cargo run --example lever_arm_cancellation

use vimu::fusion::{fuse_samples, GyroWeighting, VimuConfig};
use vimu::imu_model::{synth_accel, synth_gyro};
use vimu::weights::{placement_of, solve_noise_only_weights};
use vimu::{BiasState, ImuExtrinsics, ImuSample, NoiseSpec, Rotation, Vec3};

fn main() -> anyhow::Result<()> {
    let extrinsics = vec![
        ImuExtrinsics::new(Rotation::identity(), Vec3::new(0.7, 0.0, 0.1)),
        ImuExtrinsics::new(Rotation::about_z(1.2), Vec3::new(-0.3, 0.1, 0.1)),
        ImuExtrinsics::new(Rotation::about_x(-0.7), Vec3::new(0.2, -0.4, 0.4)),
        ImuExtrinsics::new(Rotation::exp(&Vec3::new(0.3, 0.2, -1.0)), Vec3::new(0.2, 0.3, -0.2)),
    ];
    let specs = vec![NoiseSpec::noiseless(100.0); 4];

    // Rigid-body motion at the rig origin.
    let omega = Vec3::new(0.4, -1.1, 2.5);
    let alpha = Vec3::new(3.0, 0.5, -1.0);
    let f0 = Vec3::new(0.3, -0.2, 9.81);

    let samples: Vec<ImuSample> = extrinsics
        .iter()
        .map(|e| ImuSample {
            t: 0.0,
            gyro: synth_gyro(e, &omega, &BiasState::default(), &Vec3::zeros()),
            accel: synth_accel(e, &f0, &omega, &alpha, &BiasState::default(), &Vec3::zeros()),
        })
        .collect();
    for (k, (e, s)) in extrinsics.iter().zip(&samples).enumerate() {
        let seen = e.rotation * s.accel;
        println!("IMU {k}: specific force in rig frame {:>8.3} {:>8.3} {:>8.3}", seen.x, seen.y, seen.z);
    }

    let cfg = VimuConfig::solve(extrinsics.clone(), &specs, GyroWeighting::NoiseOnly)?;
    let fused = fuse_samples(&cfg, &samples)?;
    println!("\nplacement weights {:?}", cfg.w_accel.iter().map(|w| (w * 1e4).round() / 1e4).collect::<Vec<_>>());
    println!("fused accel       {:>8.3} {:>8.3} {:>8.3}", fused.accel.x, fused.accel.y, fused.accel.z);
    println!("truth at origin   {:>8.3} {:>8.3} {:>8.3}", f0.x, f0.y, f0.z);
    println!("error             {:.2e} m/s²", (fused.accel - f0).norm());
    println!("gyro error        {:.2e} rad/s", (fused.gyro - omega).norm());

    // Plain averaging leaves the lever-arm terms of the weighted centroid in.
    let positions: Vec<Vec3> = extrinsics.iter().map(|e| e.position).collect();
    let equal = solve_noise_only_weights(&[1.0; 4], None)?.weights;
    let naive: Vec3 = extrinsics.iter().zip(&samples).zip(&equal).map(|((e, s), w)| (e.rotation * s.accel) * *w).sum();
    println!(
        "\nequal weights put the VIMU at {:.3?} m; accel error {:.3} m/s²",
        placement_of(&equal, &positions).as_slice(),
        (naive - f0).norm()
    );
    Ok(())
}
