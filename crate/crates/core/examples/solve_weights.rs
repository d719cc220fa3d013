//! Placement weights for a small heterogeneous rig: where the VIMU can sit,
//! what it costs in noise, and what happens outside the reachable region.
//!
//!     cargo run --example solve_weights

use vimu::weights::{
    solve_noise_only_weights, solve_placement_weights, WeightDiagnostics, WeightError, WeightProblem,
};
use vimu::Vec3;

fn show(label: &str, w: &[f64], sigma: f64) {
    let d = WeightDiagnostics::of(w);
    let ws: Vec<String> = w.iter().map(|x| format!("{x:+.4}")).collect();
    println!(
        "{label:<22} w = [{}]  σ = {sigma:.4}  Σw² = {:.3}{}",
        ws.join(", "),
        d.norm_sq,
        if d.has_negative() { "  (negative weight)" } else { "" }
    );
}

fn main() -> anyhow::Result<()> {
    // Tetrahedron of IMUs, 0.2 m arms; the last unit is twice as noisy.
    let positions = vec![
        Vec3::new(0.2, 0.0, -0.05),
        Vec3::new(-0.1, 0.17, -0.05),
        Vec3::new(-0.1, -0.17, -0.05),
        Vec3::new(0.0, 0.0, 0.15),
    ];
    let sigmas = vec![0.02, 0.02, 0.02, 0.04];
    let problem = WeightProblem::new(positions.clone(), sigmas.clone())?;

    let noise_only = solve_noise_only_weights(&sigmas, Some(&positions))?;
    show("noise only", &noise_only.weights, noise_only.fused_sigma);
    let r = noise_only.placement_residual;
    println!("{:<22} VIMU lands at ({:+.4}, {:+.4}, {:+.4}) m, not the origin\n", "", r.x, r.y, r.z);

    for target in [Vec3::zeros(), Vec3::new(0.05, 0.0, 0.0), Vec3::new(0.0, 0.0, -0.08), Vec3::new(0.3, 0.0, 0.0)] {
        let sol = solve_placement_weights(&problem.recentered(&target))?;
        show(&format!("target ({:+.2},{:+.2},{:+.2})", target.x, target.y, target.z), &sol.weights, sol.fused_sigma);
    }

    // Three coplanar IMUs cannot place the VIMU off their plane.
    let flat = WeightProblem::equal_noise(positions[..3].to_vec(), 0.02)?.recentered(&Vec3::new(0.0, 0.0, 0.1));
    match solve_placement_weights(&flat) {
        Err(WeightError::Infeasible { nearest_residual }) => {
            println!("\noff-plane target: infeasible, nearest point is {:.3} m away", nearest_residual.norm())
        }
        other => println!("\nunexpected: {other:?}"),
    }
    Ok(())
}
