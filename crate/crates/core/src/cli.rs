//! The `vimu` command line. Exit codes: 0 success, 1 usage/parse/validation
//! error, 2 domain failure (infeasible placement, no stream overlap, failed
//! trend or Jacobian check).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::eval::{bootstrap_trends, config_reports, default_claims, run_grid, RunSummary, TrendReport};
use crate::fusion::{fuse_stream, FusionError, GyroWeighting, SyncPolicy, VimuConfig};
use crate::geometry::Vec3;
use crate::imu_model::{gaussian3, BiasState, ImuExtrinsics};
use crate::io::{self, IoError, Rig};
use crate::liekf::{jacobian_check, random_check_point};
use crate::scenario::{RigPreset, Scenario, ScenarioError};
use crate::seeding::substream;
use crate::sim::{synth_multi_imu, RigImu};
use crate::weights::{solve_noise_only_weights, solve_placement_weights, WeightDiagnostics, WeightError, WeightProblem};

/// Relative tolerance of `check-jacobians`.
pub const JACOBIAN_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "vimu", version, about = "Fuse several rigidly mounted IMUs into one virtual IMU")]
pub struct Cli {
    /// Seed of every random draw (runs use seed, seed+1, ...)
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Rig file (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file or directory
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Log progress to standard error
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the fusion weights of a rig and report the fused noise
    SolveWeights(SolveWeightsArgs),
    /// Synthesize ground truth, multi-IMU streams and landmark observations
    Synth(SynthArgs),
    /// Fuse a recorded multi-IMU stream file into a VIMU stream
    Fuse(FuseArgs),
    /// Run the full pipeline and write every artifact per run
    Simulate(SimulateArgs),
    /// Run the configuration × seed grid and report seed-averaged errors
    Evaluate(EvaluateArgs),
    /// Compare analytic filter Jacobians with finite differences
    CheckJacobians(CheckJacobiansArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GyroWeightingArg {
    NoiseOnly,
    SameAsAccel,
}

impl From<GyroWeightingArg> for GyroWeighting {
    fn from(g: GyroWeightingArg) -> Self {
        match g {
            GyroWeightingArg::NoiseOnly => GyroWeighting::NoiseOnly,
            GyroWeightingArg::SameAsAccel => GyroWeighting::SameAsAccel,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveWeightsArgs {
    /// VIMU origin in the rig frame, overriding the rig file's target
    #[arg(long, value_name = "X,Y,Z", value_parser = parse_vec3)]
    pub target: Option<Vec3>,
    /// Inverse-variance weights only, ignoring placement
    #[arg(long)]
    pub noise_only: bool,
    /// How gyro weights are chosen
    #[arg(long, value_enum, default_value = "noise-only")]
    pub gyro_weighting: GyroWeightingArg,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML); built-in defaults when absent
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// IMU configuration (ignored when --config gives a rig file)
    #[arg(long, default_value = "S4")]
    pub imus: String,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Multi-IMU stream CSV
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// How gyro weights are chosen
    #[arg(long, value_enum, default_value = "noise-only")]
    pub gyro_weighting: GyroWeightingArg,
    /// Largest tolerated gap, in nominal sample periods
    #[arg(long, default_value_t = SyncPolicy::default().max_gap_periods)]
    pub max_gap_periods: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Comma-separated IMU configurations (S0,S2,S4,S6,A2,A4,A6)
    #[arg(long, default_value = "S4")]
    pub imus: String,
    /// Number of seeds
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Comma-separated IMU configurations
    #[arg(long, default_value = "S0,S2,S4,S6,A2,A4,A6")]
    pub imus: String,
    /// Number of seeds
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Fail (exit 2) unless the accuracy orderings hold
    #[arg(long)]
    pub assert_trends: bool,
    /// Bootstrap resamples of the seed set
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    /// Required fraction of resamples in which all orderings hold
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct CheckJacobiansArgs {
    /// Number of random states
    #[arg(long, default_value_t = 100)]
    pub samples: u64,
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got '{s}'"));
    }
    let mut v = Vec3::zeros();
    for (k, p) in parts.iter().enumerate() {
        v[k] = p.trim().parse().map_err(|_| format!("'{p}' is not a number"))?;
    }
    Ok(v)
}

/// A failed command: message and exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn domain(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::usage(e.to_string())
    }
}

fn from_fusion(stage: &str, e: FusionError) -> CliError {
    match e {
        FusionError::EmptyOverlap | FusionError::Weights(WeightError::Infeasible { .. }) => {
            CliError::domain(format!("{stage}: {e}"))
        }
        _ => CliError::usage(format!("{stage}: {e}")),
    }
}

fn from_scenario(e: ScenarioError) -> CliError {
    match e {
        ScenarioError::Fusion(f) => from_fusion("fusion", f),
        ScenarioError::UnknownPreset(_) => CliError::usage(e.to_string()),
        other => CliError::usage(other.to_string()),
    }
}

type CmdResult = Result<(), CliError>;

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::SolveWeights(a) => solve_weights(cli, a),
        Command::Synth(a) => synth(cli, a),
        Command::Fuse(a) => fuse(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::CheckJacobians(a) => check_jacobians(cli, a),
    }
}

fn require_config(cli: &Cli) -> Result<Rig, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::usage("--config <rig file> is required"))?;
    Ok(io::load_rig(path)?)
}

fn require_out(cli: &Cli) -> Result<&Path, CliError> {
    cli.out.as_deref().ok_or_else(|| CliError::usage("--out is required"))
}

fn load_scenario(a: &ScenarioArgs) -> Result<Scenario, CliError> {
    match &a.scenario {
        Some(p) => Ok(io::load_scenario(p)?),
        None => Ok(Scenario::default()),
    }
}

fn parse_presets(list: &str) -> Result<Vec<RigPreset>, CliError> {
    let mut out = Vec::new();
    for item in list.split(',').filter(|s| !s.trim().is_empty()) {
        let p: RigPreset = item.parse().map_err(|e: ScenarioError| CliError::usage(e.to_string()))?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("--imus names no configuration"));
    }
    Ok(out)
}

fn seed_list(base: u64, n: u64) -> Result<Vec<u64>, CliError> {
    if n == 0 {
        return Err(CliError::usage("--seeds must be at least 1"));
    }
    Ok((0..n).map(|k| base.wrapping_add(k)).collect())
}

#[derive(Debug, Serialize)]
struct WeightsReport {
    ids: Vec<u32>,
    target: [f64; 3],
    weights_gyro: Vec<f64>,
    weights_accel: Vec<f64>,
    fused_sigma_g: f64,
    fused_sigma_a: f64,
    placement_residual: [f64; 3],
    sum_w_sq: f64,
    noise_amplified: bool,
}

fn solve_weights(cli: &Cli, a: &SolveWeightsArgs) -> CmdResult {
    let rig = require_config(cli)?;
    let target = a.target.unwrap_or(rig.target);
    // Positions relative to the requested target.
    let positions: Vec<Vec3> = rig.extrinsics.iter().map(|e| e.position + rig.target - target).collect();
    let sigma_a: Vec<f64> = rig.noise.iter().map(|n| n.sigma_a).collect();
    let sigma_g: Vec<f64> = rig.noise.iter().map(|n| n.sigma_g).collect();
    let weight_err = |e: WeightError| match e {
        WeightError::Infeasible { nearest_residual: r } => CliError::domain(format!(
            "target ({}, {}, {}) is outside the affine span of the IMUs; nearest achievable residual ({:.6e}, {:.6e}, {:.6e}) m, |r| = {:.6e} m",
            target.x, target.y, target.z, r.x, r.y, r.z, r.norm()
        )),
        other => CliError::usage(other.to_string()),
    };

    let accel = if a.noise_only {
        solve_noise_only_weights(&sigma_a, Some(&positions))
    } else {
        WeightProblem::new(positions.clone(), sigma_a.clone()).and_then(|p| solve_placement_weights(&p))
    }
    .map_err(weight_err)?;
    let gyro = match (a.noise_only, GyroWeighting::from(a.gyro_weighting)) {
        (false, GyroWeighting::SameAsAccel) => accel.weights.clone(),
        _ => solve_noise_only_weights(&sigma_g, None).map_err(weight_err)?.weights,
    };
    let fused_g = crate::weights::fused_variance(&gyro, &sigma_g).sqrt();
    let diag = WeightDiagnostics::of(&accel.weights);

    let mut text = String::new();
    writeln!(text, "target        {:.6} {:.6} {:.6}", target.x, target.y, target.z).unwrap();
    writeln!(text, "{:>6} {:>14} {:>14}", "imu", "w_gyro", "w_accel").unwrap();
    for (k, id) in rig.ids.iter().enumerate() {
        writeln!(text, "{:>6} {:>14.10} {:>14.10}", id, gyro[k], accel.weights[k]).unwrap();
    }
    writeln!(text, "fused sigma_g {:.6e}", fused_g).unwrap();
    writeln!(text, "fused sigma_a {:.6e}", accel.fused_sigma).unwrap();
    let r = accel.placement_residual;
    writeln!(text, "residual      {:.3e} {:.3e} {:.3e}", r.x, r.y, r.z).unwrap();
    writeln!(text, "sum w^2       {:.6}", diag.norm_sq).unwrap();
    if diag.amplifies_noise() {
        writeln!(text, "noise is amplified (sum w^2 > 1)").unwrap();
    }
    print!("{text}");

    if let Some(out) = &cli.out {
        io::write_json(
            out,
            &WeightsReport {
                ids: rig.ids.clone(),
                target: target.into(),
                weights_gyro: gyro,
                weights_accel: accel.weights.clone(),
                fused_sigma_g: fused_g,
                fused_sigma_a: accel.fused_sigma,
                placement_residual: r.into(),
                sum_w_sq: diag.norm_sq,
                noise_amplified: diag.amplifies_noise(),
            },
        )?;
    }
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> CmdResult {
    let out = require_out(cli)?;
    let scenario = load_scenario(&a.scenario)?;
    let gt = scenario.ground_truth().map_err(from_scenario)?;
    let (ids, imus, rig_file): (Vec<u32>, Vec<RigImu>, _) = match &cli.config {
        Some(path) => {
            let rig = io::load_rig(path)?;
            let imus = rig
                .extrinsics
                .iter()
                .zip(&rig.noise)
                .enumerate()
                .map(|(k, (e, n))| {
                    let mut rng = substream(cli.seed, "imu-initial-bias", k as u64);
                    RigImu {
                        extrinsics: *e,
                        noise: *n,
                        initial_bias: BiasState::new(
                            gaussian3(&mut rng, scenario.initial_gyro_bias_sigma),
                            gaussian3(&mut rng, scenario.initial_accel_bias_sigma),
                        ),
                        noise_key: k as u64,
                    }
                })
                .collect();
            (rig.ids.clone(), imus, rig.to_file())
        }
        None => {
            let preset: RigPreset = a.imus.parse().map_err(|e: ScenarioError| CliError::usage(e.to_string()))?;
            let rig = scenario.rig(preset, cli.seed);
            let ids: Vec<u32> = rig.iter().map(|(id, _)| *id).collect();
            let imus: Vec<RigImu> = rig.iter().map(|(_, i)| *i).collect();
            let file = Rig {
                ids: ids.clone(),
                extrinsics: imus.iter().map(|i| i.extrinsics).collect(),
                noise: imus.iter().map(|i| i.noise).collect(),
                camera: scenario.camera,
                target: Vec3::zeros(),
            }
            .to_file();
            (ids, imus, file)
        }
    };
    let synth = synth_multi_imu(&gt, &imus, cli.seed).map_err(|e| CliError::usage(format!("synthesis: {e}")))?;
    let frames = scenario.camera_frames(&gt, cli.seed).map_err(from_scenario)?;
    let streams: Vec<(u32, &[crate::imu_model::ImuSample])> =
        ids.iter().copied().zip(synth.streams.iter().map(|s| s.as_slice())).collect();
    io::write_stream(&out.join("imu_streams.csv"), &io::interleave(&streams))?;
    io::write_atomic(&out.join("ground_truth.csv"), io::ground_truth_to_string(&gt).as_bytes())?;
    io::write_atomic(&out.join("landmarks.csv"), io::landmarks_to_string(&frames).as_bytes())?;
    io::save_rig(&out.join("rig.toml"), &rig_file)?;
    eprintln!(
        "wrote {} IMUs × {} samples and {} camera frames to {}",
        ids.len(),
        gt.len(),
        frames.len(),
        out.display()
    );
    Ok(())
}

fn fuse(cli: &Cli, a: &FuseArgs) -> CmdResult {
    let rig = require_config(cli)?;
    let out = require_out(cli)?;
    let records = io::read_stream(&a.input)?;
    let grouped = io::group_by_imu(&records);
    let stream_ids: Vec<u32> = grouped.keys().copied().collect();
    let mut rig_ids = rig.ids.clone();
    rig_ids.sort_unstable();
    if stream_ids != rig_ids {
        return Err(CliError::usage(format!(
            "{}: stream IMU ids {:?} do not match rig ids {:?}",
            a.input.display(),
            stream_ids,
            rig_ids
        )));
    }
    let extrinsics: Vec<ImuExtrinsics> = rig.extrinsics.clone();
    let cfg = VimuConfig::solve(extrinsics, &rig.noise, a.gyro_weighting.into()).map_err(|e| from_fusion("weights", e))?;
    let streams: Vec<Vec<_>> = rig.ids.iter().map(|id| grouped[id].clone()).collect();
    let policy = SyncPolicy {
        max_gap_periods: a.max_gap_periods,
    };
    let fused = fuse_stream(&cfg, &streams, policy).map_err(|e| from_fusion("fuse", e))?;
    io::write_vimu(out, &fused.samples)?;
    eprintln!(
        "samples in {}, samples out {}, dropped gaps {}",
        fused.stats.samples_in, fused.stats.samples_out, fused.stats.dropped_gaps
    );
    Ok(())
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> CmdResult {
    let out = require_out(cli)?;
    let scenario = load_scenario(&a.scenario)?;
    let presets = parse_presets(&a.imus)?;
    let seeds = seed_list(cli.seed, a.seeds)?;

    let gt = scenario.ground_truth().map_err(from_scenario)?;
    io::write_atomic(&out.join("ground_truth.csv"), io::ground_truth_to_string(&gt).as_bytes())?;
    for &s in &seeds {
        let frames = scenario.camera_frames(&gt, s).map_err(from_scenario)?;
        io::write_atomic(
            &out.join(format!("seed_{s}")).join("landmarks.csv"),
            io::landmarks_to_string(&frames).as_bytes(),
        )?;
    }
    let write_err = |e: IoError| ScenarioError::Output(e.to_string());
    let records = run_grid(&scenario, &presets, &seeds, |run| {
        let dir = out.join(run.preset.name()).join(format!("seed_{}", run.seed));
        let streams: Vec<(u32, &[crate::imu_model::ImuSample])> = run
            .imu_ids
            .iter()
            .copied()
            .zip(run.synth.streams.iter().map(|s| s.as_slice()))
            .collect();
        io::write_stream(&dir.join("imu_streams.csv"), &io::interleave(&streams)).map_err(write_err)?;
        io::write_vimu(&dir.join("vimu.csv"), &run.fused.samples).map_err(write_err)?;
        io::write_atomic(&dir.join("estimates.csv"), io::estimates_to_string(&run.estimates).as_bytes())
            .map_err(write_err)?;
        io::write_atomic(&dir.join("errors.csv"), io::errors_to_string(&run.errors).as_bytes()).map_err(write_err)?;
        io::write_json(&dir.join("summary.json"), &run.summary).map_err(write_err)?;
        Ok(())
    })
    .map_err(from_scenario)?;

    let summaries: Vec<RunSummary> = records.iter().map(|r| r.summary.clone()).collect();
    io::write_json(&out.join("summary.json"), &config_reports(&records))?;
    io::write_json(&out.join("runs.json"), &summaries)?;
    print_summaries(&summaries);
    Ok(())
}

fn print_summaries(summaries: &[RunSummary]) {
    println!("{:<8} {:>6} {:>11} {:>11} {:>11} {:>11} {:>8}", "config", "seed", "rot MAE", "rot RMSE", "pos MAE", "pos RMSE", "time s");
    for s in summaries {
        println!(
            "IMU-{:<4} {:>6} {:>11.6} {:>11.6} {:>11.6} {:>11.6} {:>8.2}",
            s.config, s.seed, s.rot_mae, s.rot_rmse, s.pos_mae, s.pos_rmse, s.wall_time_s
        );
    }
}

#[derive(Debug, Serialize)]
struct TrendFile<'a> {
    seeds: &'a [u64],
    trends: &'a TrendReport,
    passed: bool,
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> CmdResult {
    let scenario = load_scenario(&a.scenario)?;
    let presets = parse_presets(&a.imus)?;
    let seeds = seed_list(cli.seed, a.seeds)?;
    let write_err = |e: IoError| ScenarioError::Output(e.to_string());
    let records = run_grid(&scenario, &presets, &seeds, |run| {
        if let Some(out) = &cli.out {
            let path = out.join("errors").join(format!("{}_seed_{}.csv", run.preset.name(), run.seed));
            io::write_atomic(&path, io::errors_to_string(&run.errors).as_bytes()).map_err(write_err)?;
        }
        Ok(())
    })
    .map_err(from_scenario)?;
    let reports = config_reports(&records);
    let trends = bootstrap_trends(&records, &default_claims(&presets), a.bootstrap, a.threshold, cli.seed);

    println!(
        "{:<8} {:>11} {:>11} {:>11} {:>11} {:>12} {:>12}",
        "config", "rot MAE", "rot RMSE", "pos MAE", "pos RMSE", "sigma_g", "sigma_a"
    );
    for r in &reports {
        println!(
            "IMU-{:<4} {:>11.6} {:>11.6} {:>11.6} {:>11.6} {:>12.4e} {:>12.4e}",
            r.config, r.rot_mae, r.rot_rmse, r.pos_mae, r.pos_rmse, r.fused_sigma.gyro, r.fused_sigma.accel
        );
    }
    for c in &trends.claims {
        println!("{:<30} means: {:<5} support {:.3}", c.claim, c.holds_on_means, c.support);
    }
    let passed = trends.passed();
    println!("joint support {:.3} (threshold {})", trends.joint_support, trends.threshold);

    if let Some(out) = &cli.out {
        io::write_json(&out.join("report.json"), &reports)?;
        io::write_json(
            &out.join("trends.json"),
            &TrendFile {
                seeds: &seeds,
                trends: &trends,
                passed,
            },
        )?;
    }
    if a.assert_trends && !passed {
        return Err(CliError::domain("trend assertions failed"));
    }
    Ok(())
}

fn check_jacobians(cli: &Cli, a: &CheckJacobiansArgs) -> CmdResult {
    let cam = crate::camera::CameraModel::default();
    let gravity = Vec3::new(0.0, 0.0, 9.81);
    let mut worst_prop = 0.0_f64;
    let mut worst_meas = 0.0_f64;
    for k in 0..a.samples {
        let mut rng = substream(cli.seed, "jacobian-check", k);
        let (state, start, end, landmark) = random_check_point(&mut rng);
        let rep = jacobian_check(&state, &start, &end, &landmark, &cam, &gravity);
        worst_prop = worst_prop.max(rep.propagation);
        worst_meas = worst_meas.max(rep.measurement);
    }
    println!("states checked          {}", a.samples);
    println!("propagation max rel dev {worst_prop:.3e}");
    println!("measurement max rel dev {worst_meas:.3e}");
    if worst_prop.max(worst_meas) > JACOBIAN_TOLERANCE {
        return Err(CliError::domain(format!("Jacobian deviation exceeds {JACOBIAN_TOLERANCE:e}")));
    }
    println!("ok (tolerance {JACOBIAN_TOLERANCE:e})");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec3_flag_parsing() {
        assert_eq!(parse_vec3("1, -2,3.5").unwrap(), Vec3::new(1.0, -2.0, 3.5));
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_vec3("a,b,c").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["vimu", "frobnicate"]), 1);
        assert_eq!(run(["vimu", "check-jacobians", "--bogus"]), 1);
        assert_eq!(run(["vimu", "solve-weights"]), 1);
        assert_eq!(run(["vimu", "--help"]), 0);
    }

    #[test]
    fn presets_and_seeds() {
        assert_eq!(parse_presets("S0, a2,S0").unwrap(), vec![RigPreset::S0, RigPreset::A2]);
        assert!(parse_presets("S0,X9").is_err());
        assert_eq!(seed_list(5, 3).unwrap(), vec![5, 6, 7]);
        assert!(seed_list(1, 0).is_err());
    }
}
