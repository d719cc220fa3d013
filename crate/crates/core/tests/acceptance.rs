//! Acceptance criteria 1–8. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Run with `cargo test --test acceptance`.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vimu::camera::CameraModel;
use vimu::eval::{bootstrap_trends, config_reports, default_claims, run_experiment};
use vimu::fusion::{fuse_samples, fuse_stream, GyroWeighting, SyncPolicy, VimuConfig};
use vimu::geometry::Vec3;
use vimu::imu_model::{gaussian3, BiasState, ImuExtrinsics, ImuSample, NoiseSpec};
use vimu::io::{self, ImuEntry, RigFile, StreamRecord};
use vimu::liekf::{
    jacobian_check, propagate, random_check_point, update_landmarks, FilterBelief, InitialSigmas, NavState,
};
use vimu::scenario::{random_rotation, RigPreset, Scenario};
use vimu::sim::{
    generate_ground_truth, synth_landmark_obs, synth_multi_imu, ObservationSpec, RigImu, Sinusoid, SinusoidBank,
    TrajectorySpec,
};
use vimu::weights::{solve_placement_weights, WeightDiagnostics, WeightProblem};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_trajectory(rng: &mut ChaCha8Rng, duration_s: f64) -> TrajectorySpec {
    let mut bank = |amp: f64| SinusoidBank {
        x: vec![Sinusoid::new(rng.random_range(-amp..amp), rng.random_range(0.1..2.0), rng.random_range(0.0..6.3))],
        y: vec![Sinusoid::new(rng.random_range(-amp..amp), rng.random_range(0.1..2.0), rng.random_range(0.0..6.3))],
        z: vec![Sinusoid::new(rng.random_range(-amp..amp), rng.random_range(0.1..2.0), rng.random_range(0.0..6.3))],
    };
    TrajectorySpec {
        angular_rate: bank(2.0),
        acceleration: bank(3.0),
        duration_s,
        ..Default::default()
    }
}

/// Positions within the unit ball shifted so the origin is a random convex
/// combination of them (so `‖r‖ ≤ 2` and the placement is feasible).
fn feasible_positions(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    let raw: Vec<Vec3> = (0..n)
        .map(|_| loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() <= 1.0 {
                break v;
            }
        })
        .collect();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = a.iter().sum();
    let centre: Vec3 = raw.iter().zip(&a).map(|(p, w)| p * (w / total)).sum();
    raw.iter().map(|p| p - centre).collect()
}

/// 1. Lever-arm elimination on 1000 random noiseless rigs.
fn lever_arm_elimination() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for rig_index in 0..1000u64 {
        let n = rng.random_range(2..=8);
        let positions = feasible_positions(&mut rng, n);
        let extrinsics: Vec<ImuExtrinsics> =
            positions.iter().map(|p| ImuExtrinsics::new(random_rotation(&mut rng), *p)).collect();
        let rate = 100.0;
        let rig: Vec<RigImu> = extrinsics
            .iter()
            .enumerate()
            .map(|(k, e)| RigImu {
                extrinsics: *e,
                noise: NoiseSpec::noiseless(rate),
                initial_bias: BiasState::default(),
                noise_key: k as u64,
            })
            .collect();
        let gt = generate_ground_truth(&random_trajectory(&mut rng, 0.5), rate).map_err(|e| e.to_string())?;
        let synth = synth_multi_imu(&gt, &rig, rig_index).map_err(|e| e.to_string())?;
        let specs: Vec<NoiseSpec> = rig.iter().map(|r| r.noise).collect();
        let cfg = VimuConfig::solve(extrinsics, &specs, GyroWeighting::NoiseOnly).map_err(|e| e.to_string())?;
        for (k, truth) in gt.samples.iter().enumerate() {
            let tick: Vec<ImuSample> = synth.streams.iter().map(|s| s[k]).collect();
            let fused = fuse_samples(&cfg, &tick).map_err(|e| e.to_string())?;
            worst = worst.max((fused.accel - truth.specific_force).amax());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        worst <= 1e-10 && secs < 10.0,
        format!("1000 rigs, max |fused − true specific force| = {worst:.2e} m/s² (≤ 1e-10), {secs:.1} s"),
    )
}

/// Weights from the KKT system `[2Σ Aᵀ; A 0][w; λ] = [0; b]`, solved by SVD.
fn kkt_weights(positions: &[Vec3], sigmas: &[f64]) -> Vec<f64> {
    let n = positions.len();
    let m = DMatrix::from_fn(n + 4, n + 4, |i, j| match (i < n, j < n) {
        (true, true) => {
            if i == j {
                2.0 * sigmas[i] * sigmas[i]
            } else {
                0.0
            }
        }
        (true, false) => constraint_row(positions, j - n, i),
        (false, true) => constraint_row(positions, i - n, j),
        (false, false) => 0.0,
    });
    let mut rhs = DVector::zeros(n + 4);
    rhs[n] = 1.0;
    let sol = m.svd(true, true).solve(&rhs, 1e-12).expect("svd solve");
    sol.rows(0, n).iter().copied().collect()
}

fn constraint_row(positions: &[Vec3], row: usize, j: usize) -> f64 {
    if row == 0 {
        1.0
    } else {
        positions[j][row - 1]
    }
}

/// 2. Closed-form weights vs the KKT oracle on 100 feasible instances.
fn qp_correctness() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut dev, mut sum_err, mut place_err) = (0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..100 {
        let n = 2 + k % 7;
        let positions = feasible_positions(&mut rng, n);
        let sigmas: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let sol = solve_placement_weights(&WeightProblem::new(positions.clone(), sigmas.clone()).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let oracle = kkt_weights(&positions, &sigmas);
        for (a, b) in sol.weights.iter().zip(&oracle) {
            dev = dev.max((a - b).abs());
        }
        sum_err = sum_err.max((sol.weights.iter().sum::<f64>() - 1.0).abs());
        let placed: Vec3 = positions.iter().zip(&sol.weights).map(|(r, w)| r * *w).sum();
        place_err = place_err.max(placed.amax());
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        dev <= 1e-8 && sum_err <= 1e-10 && place_err <= 1e-10 && secs < 5.0,
        format!(
            "100 instances, max |w − w_kkt| = {dev:.2e} (≤ 1e-8), |Σw − 1| = {sum_err:.2e}, |Σwr| = {place_err:.2e} (≤ 1e-10), {secs:.2} s"
        ),
    )
}

/// 3. Fused white-noise std over 10⁶ samples.
fn noise_scaling() -> Outcome {
    let started = Instant::now();
    let sigma = 0.05;
    let cases: Vec<(&str, Vec<f64>, f64)> = vec![
        ("n=2", vec![0.5; 2], sigma / 2f64.sqrt()),
        ("n=4", vec![0.25; 4], sigma / 2.0),
        ("n=6", vec![1.0 / 6.0; 6], sigma / 6f64.sqrt()),
        ("[1.2,-0.1,-0.1]", vec![1.2, -0.1, -0.1], sigma * 1.46f64.sqrt()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, w, expected) in cases {
        let n = w.len();
        // Co-located IMUs: any weights satisfy the placement constraint.
        let extrinsics: Vec<ImuExtrinsics> =
            (0..n).map(|_| ImuExtrinsics::new(random_rotation(&mut rng), Vec3::zeros())).collect();
        let specs = vec![NoiseSpec { sigma_g: sigma, sigma_a: sigma, ..NoiseSpec::default() }; n];
        let fused_noise = vimu::fusion::fused_noise_spec(&w, &w, &specs).map_err(|e| e.to_string())?;
        let cfg = VimuConfig::new(extrinsics.clone(), w.clone(), w.clone(), fused_noise).map_err(|e| e.to_string())?;
        let samples = 1_000_000;
        let (mut sg, mut sa) = (0.0, 0.0);
        let mut tick = vec![ImuSample { t: 0.0, gyro: Vec3::zeros(), accel: Vec3::zeros() }; n];
        for _ in 0..samples {
            for s in tick.iter_mut() {
                s.gyro = gaussian3(&mut rng, sigma);
                s.accel = gaussian3(&mut rng, sigma);
            }
            let f = fuse_samples(&cfg, &tick).map_err(|e| e.to_string())?;
            sg += f.gyro.norm_squared();
            sa += f.accel.norm_squared();
        }
        let std_g = (sg / (3.0 * samples as f64)).sqrt();
        let std_a = (sa / (3.0 * samples as f64)).sqrt();
        let predicted = cfg.fused_noise.sigma_a;
        let rel = [std_g, std_a, predicted].iter().map(|s| (s / expected - 1.0).abs()).fold(0.0, f64::max);
        ok &= rel <= 0.05;
        lines.push(format!("{name}: {:.5}/{:.5} vs {expected:.5} ({:.2}%)", std_g, std_a, 100.0 * rel));
    }
    let secs = started.elapsed().as_secs_f64();
    check(ok && secs < 30.0, format!("{}; {secs:.1} s", lines.join("; ")))
}

/// 4. Accuracy trend over 20 paired seeds and all seven configurations.
fn table_trend() -> Outcome {
    let started = Instant::now();
    let seeds: Vec<u64> = (1..=20).collect();
    let records = run_experiment(&Scenario::default(), &RigPreset::ALL, &seeds).map_err(|e| e.to_string())?;
    let trends = bootstrap_trends(&records, &default_claims(&RigPreset::ALL), 1000, 0.9, 0);
    let means: Vec<String> = config_reports(&records)
        .iter()
        .map(|r| format!("{} {:.5}/{:.4}", r.config, r.rot_mae, r.pos_mae))
        .collect();
    let weakest = trends.claims.iter().map(|c| c.support).fold(1.0, f64::min);
    check(
        trends.passed(),
        format!(
            "rot/pos MAE {}; {} orderings, joint bootstrap support {:.3} (weakest {:.3}, need ≥ 0.9); {:.0} s",
            means.join(", "),
            trends.claims.len(),
            trends.joint_support,
            weakest,
            started.elapsed().as_secs_f64()
        ),
    )
}

fn min_eigenvalue(p: &nalgebra::SMatrix<f64, 15, 15>) -> f64 {
    SymmetricEigen::new(*p).eigenvalues.min()
}

/// 5. Jacobians, covariance validity and noiseless drift.
fn iekf_validity() -> Outcome {
    let cam = CameraModel::default();
    let gravity = Vec3::new(0.0, 0.0, 9.81);
    let mut worst_jac = 0.0_f64;
    for k in 0..100 {
        let mut rng = vimu::seeding::substream(5, "jacobian-check", k);
        let (state, a, b, landmark) = random_check_point(&mut rng);
        worst_jac = worst_jac.max(jacobian_check(&state, &a, &b, &landmark, &cam, &gravity).max());
    }

    // 10⁴ propagate/update cycles on a noisy S4 run.
    let scenario = Scenario::default();
    let spec = TrajectorySpec { duration_s: 100.0, ..scenario.trajectory.clone() };
    let gt = generate_ground_truth(&spec, 100.0).map_err(|e| e.to_string())?;
    let rig: Vec<RigImu> = scenario.rig(RigPreset::S4, 5).into_iter().map(|(_, r)| r).collect();
    let synth = synth_multi_imu(&gt, &rig, 5).map_err(|e| e.to_string())?;
    let specs: Vec<NoiseSpec> = rig.iter().map(|r| r.noise).collect();
    let cfg = VimuConfig::solve(rig.iter().map(|r| r.extrinsics).collect(), &specs, GyroWeighting::SameAsAccel)
        .map_err(|e| e.to_string())?;
    let fused = fuse_stream(&cfg, &synth.streams, SyncPolicy::default()).map_err(|e| e.to_string())?;
    let obs = ObservationSpec { rate_hz: 10.0, ..Default::default() };
    let frames = synth_landmark_obs(&gt, &cam, &obs, 5).map_err(|e| e.to_string())?;
    let t0 = &gt.samples[0];
    let mut belief = FilterBelief::new(
        NavState { rotation: t0.rotation, velocity: t0.velocity, position: t0.position, ..Default::default() },
        &InitialSigmas::default(),
    );
    let (mut asym, mut min_eig, mut cycles) = (0.0_f64, f64::INFINITY, 0usize);
    let mut frame_iter = frames.iter().peekable();
    for pair in fused.samples.windows(2) {
        belief = propagate(&belief, &pair[0], &pair[1], &cfg.fused_noise, &gravity).map_err(|e| e.to_string())?;
        if let Some(f) = frame_iter.next_if(|f| f.t == pair[1].t) {
            belief = update_landmarks(&belief, &f.observations, &cam).map_err(|e| e.to_string())?;
        }
        cycles += 1;
        let p = &belief.cov;
        asym = asym.max((p - p.transpose()).amax() / p.amax());
        if cycles % 10 == 0 {
            min_eig = min_eig.min(min_eigenvalue(p));
        }
    }
    min_eig = min_eig.min(min_eigenvalue(&belief.cov));

    // Noiseless S4 rig, 120 s of pure dead reckoning.
    let gt = generate_ground_truth(&scenario.trajectory, 100.0).map_err(|e| e.to_string())?;
    let clean: Vec<RigImu> = rig
        .iter()
        .map(|r| RigImu { noise: NoiseSpec::noiseless(100.0), initial_bias: BiasState::default(), ..*r })
        .collect();
    let synth = synth_multi_imu(&gt, &clean, 5).map_err(|e| e.to_string())?;
    let specs: Vec<NoiseSpec> = clean.iter().map(|r| r.noise).collect();
    let cfg = VimuConfig::solve(clean.iter().map(|r| r.extrinsics).collect(), &specs, GyroWeighting::SameAsAccel)
        .map_err(|e| e.to_string())?;
    let fused = fuse_stream(&cfg, &synth.streams, SyncPolicy::default()).map_err(|e| e.to_string())?;
    let t0 = &gt.samples[0];
    let mut state = NavState { rotation: t0.rotation, velocity: t0.velocity, position: t0.position, ..Default::default() };
    for pair in fused.samples.windows(2) {
        state = vimu::liekf::propagate_state(&state, &pair[0], &pair[1], &gravity);
    }
    let drift = (state.position - gt.last().position).norm();

    check(
        worst_jac <= 1e-5 && asym <= 1e-12 && min_eig >= 0.0 && cycles >= 10_000 && drift < 1e-3,
        format!(
            "Jacobian max rel dev {worst_jac:.2e} (≤ 1e-5) on 100 states; {cycles} cycles, asymmetry {asym:.1e}, min eigenvalue {min_eig:.2e} (≥ 0); 120 s noiseless drift {drift:.2e} m (< 1e-3)"
        ),
    )
}

/// 6. Convergence order of the ground-truth integrator under dt halving.
fn integration_order() -> Outcome {
    let spec = TrajectorySpec::default();
    let end = |rate: f64| generate_ground_truth(&spec, rate).map(|g| *g.last());
    let reference = end(1600.0).map_err(|e| e.to_string())?;
    let err = |rate: f64| -> Result<(f64, f64), String> {
        let s = end(rate).map_err(|e| e.to_string())?;
        Ok(((s.position - reference.position).norm(), s.rotation.angle_to(&reference.rotation)))
    };
    let (p50, r50) = err(50.0)?;
    let (p100, r100) = err(100.0)?;
    let (p200, r200) = err(200.0)?;
    let order = |a: f64, b: f64| (a / b).log2();
    let orders = [order(p50, p100), order(p100, p200), order(r50, r100), order(r100, r200)];
    let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        min >= 1.9,
        format!(
            "observed order position {:.3}/{:.3}, rotation {:.3}/{:.3} at 50→100→200 Hz vs 1600 Hz (≥ 1.9)",
            orders[0], orders[1], orders[2], orders[3]
        ),
    )
}

/// Finite f64 from random bits, biased toward a spread of magnitudes.
fn random_f64(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let x = if rng.random_bool(0.5) {
            f64::from_bits(rng.random())
        } else {
            rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-8..8))
        };
        if x.is_finite() {
            return x;
        }
    }
}

/// 7. Lossless stream and rig round-trips on randomized content.
fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let path = Path::new("random.csv");
    let mut t = [0.0_f64; 5];
    let records: Vec<StreamRecord> = (0..100_000)
        .map(|_| {
            let id = rng.random_range(0..5u32);
            t[id as usize] += rng.random_range(1e-6..0.02);
            let mut v = || Vec3::new(random_f64(&mut rng), random_f64(&mut rng), random_f64(&mut rng));
            StreamRecord { imu_id: id * 7, sample: ImuSample { t: t[id as usize], gyro: v(), accel: v() } }
        })
        .collect();
    let text = io::stream_to_string(&records);
    let back = io::parse_stream_str(&text, path).map_err(|e| e.to_string())?;
    let bits = |r: &StreamRecord| {
        let s = &r.sample;
        (r.imu_id, [s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z].map(f64::to_bits))
    };
    let streams_ok = back.len() == records.len()
        && back.iter().zip(&records).all(|(a, b)| bits(a) == bits(b))
        && io::stream_to_string(&back) == text;

    let mut rigs_ok = true;
    for k in 0..1000u32 {
        let n = rng.random_range(1..=8);
        let file = RigFile {
            target: rng.random_bool(0.5).then(|| [random_f64(&mut rng), random_f64(&mut rng), random_f64(&mut rng)]),
            camera: rng.random_bool(0.5).then(|| CameraModel { focal: random_f64(&mut rng).abs(), ..Default::default() }),
            imus: (0..n)
                .map(|j| {
                    let r = random_rotation(&mut rng);
                    let quat = rng.random_bool(0.3);
                    let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                    let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                    ImuEntry {
                        id: k * 10 + j,
                        rotation: (!quat).then(|| r.to_row_major()),
                        quaternion_wxyz: quat.then(|| q.map(|x| x / qn)),
                        position: [random_f64(&mut rng), random_f64(&mut rng), random_f64(&mut rng)],
                        noise: NoiseSpec {
                            sigma_g: random_f64(&mut rng).abs(),
                            sigma_a: random_f64(&mut rng).abs(),
                            sigma_bg: random_f64(&mut rng).abs(),
                            sigma_ba: random_f64(&mut rng).abs(),
                            rate_hz: rng.random_range(1.0..1000.0),
                        },
                    }
                })
                .collect(),
        };
        let text = io::rig_to_string(&file);
        let parsed = io::parse_rig_str(&text, path).map_err(|e| format!("{e}\n{text}"))?;
        rigs_ok &= parsed == file && io::rig_to_string(&parsed) == text;
    }
    check(
        streams_ok && rigs_ok,
        format!("100000 stream samples bit-identical: {streams_ok}; 1000 random rig files identical: {rigs_ok}"),
    )
}

/// 8. Reference weight vectors against the Σw = 1 and Σw² > 1 diagnostics.
fn reference_weights() -> Outcome {
    let cases: [(&str, Vec<f64>, bool); 3] = [
        ("equal thirds", vec![1.0 / 3.0; 3], false),
        ("[0.4944, 0.1546, 0.3509]", vec![0.4944, 0.1546, 0.3509], false),
        ("[1.2, -0.1, -0.1]", vec![1.2, -0.1, -0.1], true),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, w, amplified) in cases {
        let d = WeightDiagnostics::of(&w);
        // The middle vector is given to four decimals.
        let pass = d.sums_to_one(1.5e-4) && d.amplifies_noise() == amplified && d.has_negative() == amplified;
        ok &= pass;
        lines.push(format!(
            "{name}: Σw={:.4} Σw²={:.4}{}",
            d.sum,
            d.norm_sq,
            if d.amplifies_noise() { " noise is amplified" } else { "" }
        ));
    }
    let neg = WeightDiagnostics::of(&[1.2, -0.1, -0.1]);
    ok &= (neg.norm_sq - 1.46).abs() < 1e-12;
    check(ok, lines.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 lever-arm elimination", lever_arm_elimination),
        ("2 QP correctness", qp_correctness),
        ("3 noise scaling", noise_scaling),
        ("4 accuracy trend", table_trend),
        ("5 IEKF numerical validity", iekf_validity),
        ("6 integration order", integration_order),
        ("7 format round-trips", format_round_trips),
        ("8 weight diagnostics", reference_weights),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS [{name}] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{name}] {detail}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
