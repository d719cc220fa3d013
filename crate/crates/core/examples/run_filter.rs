//! One seed, camera-aided invariant EKF on the VIMU of several rigs: error
//! over time, final uncertainty and how close the bias estimate got.
//!
//!     cargo run --release --example run_filter -- [seed]

use vimu::scenario::{combined_bias, run_single, RigPreset, Scenario};

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let scenario = Scenario::default();
    let gt = scenario.ground_truth()?;
    let frames = scenario.camera_frames(&gt, seed)?;

    for preset in [RigPreset::S0, RigPreset::S2, RigPreset::S6] {
        let run = run_single(&scenario, preset, seed, &gt, &frames)?;
        println!("{preset} (σ_a fused {:.4} m/s²)", run.config.fused_noise.sigma_a);
        println!("  {:>6} {:>12} {:>10} {:>10}", "t [s]", "rot [deg]", "pos [m]", "σ_pos [m]");
        let n = run.estimates.len();
        for k in (0..n).filter(|k| k % 2000 == 0 || *k == n - 1) {
            let e = &run.estimates[k];
            let sd = (e.sigmas[6].powi(2) + e.sigmas[7].powi(2) + e.sigmas[8].powi(2)).sqrt();
            println!(
                "  {:>6.1} {:>12.4} {:>10.4} {:>10.4}",
                e.t,
                run.errors.rotation[k].to_degrees(),
                run.errors.position[k],
                sd
            );
        }
        let last = run.estimates.len() - 1;
        let truth = combined_bias(&run.config, &run.synth, last);
        let est = &run.estimates[last].state;
        println!(
            "  gyro bias error {:.2e} rad/s, accel bias error {:.2e} m/s²",
            (est.gyro_bias - truth.gyro).norm(),
            (est.accel_bias - truth.accel).norm()
        );
        let s = &run.summary;
        println!(
            "  rot MAE {:.5} rad  RMSE {:.5}   pos MAE {:.4} m  RMSE {:.4}\n",
            s.rot_mae, s.rot_rmse, s.pos_mae, s.pos_rmse
        );
    }
    Ok(())
}
