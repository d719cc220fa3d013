//! Analytic filter Jacobians against central differences at random states.
//!
//!     cargo run --example jacobian_check -- [samples]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vimu::camera::CameraModel;
use vimu::liekf::{jacobian_check, random_check_point, FD_STEP};

fn main() -> anyhow::Result<()> {
    let samples: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let cam = CameraModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut prop, mut meas) = (Vec::new(), Vec::new());
    for _ in 0..samples {
        let (state, a, b, landmark) = random_check_point(&mut rng);
        let report = jacobian_check(&state, &a, &b, &landmark, &cam, &vimu::Vec3::new(0.0, 0.0, 9.81));
        prop.push(report.propagation);
        meas.push(report.measurement);
    }
    for (name, mut dev) in [("propagation", prop), ("measurement", meas)] {
        dev.sort_by(f64::total_cmp);
        println!(
            "{name:<12} median {:.1e}  max {:.1e}",
            dev[dev.len() / 2],
            dev[dev.len() - 1]
        );
    }
    println!("finite-difference step {FD_STEP:e}; deviations are relative to the largest entry");
    Ok(())
}
