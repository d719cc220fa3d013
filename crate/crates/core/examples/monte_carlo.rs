//! Accuracy vs IMU count: every rig preset over a paired seed grid, with the
//! bootstrap check of the orderings.
//!
//!     cargo run --release --example monte_carlo -- [n_seeds]

use vimu::eval::{bootstrap_trends, config_reports, default_claims, run_experiment};
use vimu::scenario::{RigPreset, Scenario};

fn main() -> anyhow::Result<()> {
    let n: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let seeds: Vec<u64> = (1..=n).collect();
    let scenario = Scenario::default();
    let started = std::time::Instant::now();
    let records = run_experiment(&scenario, &RigPreset::ALL, &seeds)?;
    println!("{} runs in {:.1} s\n", records.len(), started.elapsed().as_secs_f64());

    println!("{:<6} {:>10} {:>10} {:>10} {:>10} {:>9}", "config", "rot MAE", "rot RMSE", "pos MAE", "pos RMSE", "σ_a");
    for r in config_reports(&records) {
        println!(
            "IMU-{:<2} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>9.5}",
            r.config, r.rot_mae, r.rot_rmse, r.pos_mae, r.pos_rmse, r.fused_sigma.accel
        );
    }

    let trends = bootstrap_trends(&records, &default_claims(&RigPreset::ALL), 1000, 0.9, 0);
    println!();
    for c in &trends.claims {
        println!("{:<32} on means: {:<5} bootstrap support {:.3}", c.claim, c.holds_on_means, c.support);
    }
    println!("joint support {:.3} -> {}", trends.joint_support, if trends.passed() { "PASS" } else { "FAIL" });
    Ok(())
}
