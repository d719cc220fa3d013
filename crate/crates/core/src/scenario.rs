//! Simulation scenarios: the physical IMU layout, the rig presets built from
//! it, and the end-to-end pipeline of one run (synthesize, solve weights,
//! fuse, filter, score).
//!
//! Physical IMUs: id 0 sits at the camera (VIMU) origin; ids 1–6 sit on
//! `±x, ±y, ±z` at `arm_length`; ids 11–16 are position-perturbed copies of
//! 1–6. The perturbation of each pair stays within the span of the axes used
//! so far (x, then the xy-plane, then 3-D), so the camera origin stays inside
//! the affine hull of every asymmetric preset.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::eval::{compute_errors, summarize, ErrorSeries, EstimateSample, EvalError, RunSummary};
use crate::fusion::{fuse_stream, FusedStream, FusionError, GyroWeighting, SyncPolicy, VimuConfig};
use crate::geometry::{Rotation, Vec3};
use crate::imu_model::{gaussian3, BiasState, ImuExtrinsics, NoiseSpec};
use crate::liekf::{propagate, update_landmarks, FilterBelief, FilterError, InitialSigmas, NavState};
use crate::seeding::substream;
use crate::sim::{
    generate_ground_truth, synth_landmark_obs, synth_multi_imu, CameraFrame, GroundTruth, ObservationSpec, RigImu,
    SimError, SynthOutput, TrajectorySpec,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("fusion: {0}")]
    Fusion(#[from] FusionError),
    #[error("filter: {0}")]
    Filter(#[from] FilterError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("writing artifacts: {0}")]
    Output(String),
    #[error("unknown IMU configuration '{0}' (expected S0, S2, S4, S6, A2, A4 or A6)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutSpec {
    /// Offset (m) of the symmetric IMUs from the camera origin.
    pub arm_length: f64,
    /// Largest displacement (m) of an asymmetric IMU along each axis.
    pub asym_perturbation: f64,
    /// Seed of the mounting orientations and perturbations, fixed per scenario.
    pub layout_seed: u64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        Self {
            arm_length: 1.0,
            asym_perturbation: 0.4,
            layout_seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterInit {
    pub attitude_sigma: f64,
    pub velocity_sigma: f64,
    pub position_sigma: f64,
}

impl Default for FilterInit {
    fn default() -> Self {
        Self {
            attitude_sigma: 0.01,
            velocity_sigma: 0.05,
            position_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GyroWeightingSpec {
    NoiseOnly,
    SameAsAccel,
}

impl From<GyroWeightingSpec> for GyroWeighting {
    fn from(g: GyroWeightingSpec) -> Self {
        match g {
            GyroWeightingSpec::NoiseOnly => GyroWeighting::NoiseOnly,
            GyroWeightingSpec::SameAsAccel => GyroWeighting::SameAsAccel,
        }
    }
}

/// Everything needed to reproduce a simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub trajectory: TrajectorySpec,
    pub imu_rate_hz: f64,
    /// Noise of every physical IMU (identical sensors).
    pub imu_noise: NoiseSpec,
    /// Std of each IMU's initial gyro bias (rad/s).
    pub initial_gyro_bias_sigma: f64,
    /// Std of each IMU's initial accel bias (m/s²).
    pub initial_accel_bias_sigma: f64,
    pub camera: CameraModel,
    pub observations: ObservationSpec,
    pub layout: LayoutSpec,
    /// The experiment computes one weight set for both sensor types by default.
    pub gyro_weighting: GyroWeightingSpec,
    pub filter: FilterInit,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            trajectory: TrajectorySpec::default(),
            imu_rate_hz: 100.0,
            imu_noise: NoiseSpec::default(),
            initial_gyro_bias_sigma: 0.002,
            initial_accel_bias_sigma: 0.02,
            camera: CameraModel::default(),
            observations: ObservationSpec::default(),
            layout: LayoutSpec::default(),
            gyro_weighting: GyroWeightingSpec::SameAsAccel,
            filter: FilterInit::default(),
        }
    }
}

/// The simulated IMU configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RigPreset {
    S0,
    S2,
    S4,
    S6,
    A2,
    A4,
    A6,
}

impl RigPreset {
    pub const ALL: [RigPreset; 7] = [Self::S0, Self::S2, Self::S4, Self::S6, Self::A2, Self::A4, Self::A6];

    /// Physical IMU ids used by this preset.
    pub fn imu_ids(&self) -> &'static [u32] {
        match self {
            Self::S0 => &[0],
            Self::S2 => &[1, 2],
            Self::S4 => &[1, 2, 3, 4],
            Self::S6 => &[1, 2, 3, 4, 5, 6],
            Self::A2 => &[11, 12],
            Self::A4 => &[11, 12, 13, 14],
            Self::A6 => &[11, 12, 13, 14, 15, 16],
        }
    }

    /// Symmetric counterpart of an asymmetric preset.
    pub fn symmetric_counterpart(&self) -> Option<RigPreset> {
        match self {
            Self::A2 => Some(Self::S2),
            Self::A4 => Some(Self::S4),
            Self::A6 => Some(Self::S6),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::S0 => "S0",
            Self::S2 => "S2",
            Self::S4 => "S4",
            Self::S6 => "S6",
            Self::A2 => "A2",
            Self::A4 => "A4",
            Self::A6 => "A6",
        }
    }
}

impl fmt::Display for RigPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IMU-{}", self.name())
    }
}

impl FromStr for RigPreset {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase();
        let key = key.strip_prefix("IMU-").unwrap_or(&key);
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.name() == key)
            .ok_or_else(|| ScenarioError::UnknownPreset(s.to_string()))
    }
}

/// Uniformly distributed random rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    Rotation::from_quaternion_wxyz(q)
}

/// Pose of every physical IMU relative to the camera origin.
pub fn physical_layout(spec: &LayoutSpec) -> BTreeMap<u32, ImuExtrinsics> {
    let l = spec.arm_length;
    let axes = [
        Vec3::new(l, 0.0, 0.0),
        Vec3::new(-l, 0.0, 0.0),
        Vec3::new(0.0, l, 0.0),
        Vec3::new(0.0, -l, 0.0),
        Vec3::new(0.0, 0.0, l),
        Vec3::new(0.0, 0.0, -l),
    ];
    let orientation = |slot: u64| random_rotation(&mut substream(spec.layout_seed, "layout-orientation", slot));
    let mut out = BTreeMap::new();
    out.insert(0, ImuExtrinsics::new(orientation(0), Vec3::zeros()));
    let mut perturb = substream(spec.layout_seed, "layout-perturbation", 0);
    let d = spec.asym_perturbation;
    for (k, base) in axes.iter().enumerate() {
        let slot = k as u32 + 1;
        let rotation = orientation(u64::from(slot));
        out.insert(slot, ImuExtrinsics::new(rotation, *base));
        // Pair k/2 may move along the first k/2 + 1 axes. Along its own axis
        // the first IMU of a pair moves outward and the second inward, so no
        // pair ends up symmetric by chance.
        let own = k / 2;
        let mut delta = Vec3::zeros();
        if d > 0.0 {
            for axis in 0..own {
                delta[axis] = perturb.random_range(-d..d);
            }
            let along = perturb.random_range(0.5 * d..d);
            delta[own] = if k % 2 == 0 { along * base[own].signum() } else { -along * base[own].signum() };
        }
        out.insert(slot + 10, ImuExtrinsics::new(rotation, base + delta));
    }
    out
}

/// Noise substream key shared by an IMU and its perturbed counterpart, so
/// symmetric and asymmetric presets see the same sensor noise.
pub fn noise_slot(id: u32) -> u64 {
    u64::from(id % 10)
}

impl Scenario {
    pub fn ground_truth(&self) -> Result<GroundTruth, ScenarioError> {
        Ok(generate_ground_truth(&self.trajectory, self.imu_rate_hz)?)
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            rate_hz: self.imu_rate_hz,
            ..self.imu_noise
        }
    }

    /// IMUs of `preset` with per-seed initial biases.
    pub fn rig(&self, preset: RigPreset, seed: u64) -> Vec<(u32, RigImu)> {
        let layout = physical_layout(&self.layout);
        let noise = self.noise_spec();
        preset
            .imu_ids()
            .iter()
            .map(|&id| {
                let slot = noise_slot(id);
                let mut rng = substream(seed, "imu-initial-bias", slot);
                let initial_bias = BiasState::new(
                    gaussian3(&mut rng, self.initial_gyro_bias_sigma),
                    gaussian3(&mut rng, self.initial_accel_bias_sigma),
                );
                let imu = RigImu {
                    extrinsics: layout[&id],
                    noise,
                    initial_bias,
                    noise_key: slot,
                };
                (id, imu)
            })
            .collect()
    }

    pub fn camera_frames(&self, gt: &GroundTruth, seed: u64) -> Result<Vec<CameraFrame>, ScenarioError> {
        Ok(synth_landmark_obs(gt, &self.camera, &self.observations, seed)?)
    }
}

/// Everything one simulated run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub preset: RigPreset,
    pub seed: u64,
    pub imu_ids: Vec<u32>,
    pub config: VimuConfig,
    pub synth: SynthOutput,
    pub fused: FusedStream,
    pub estimates: Vec<EstimateSample>,
    pub errors: ErrorSeries,
    pub summary: RunSummary,
}

/// Fused truth bias `Σ w_j C_j b_j` at tick `k`.
pub fn combined_bias(config: &VimuConfig, synth: &SynthOutput, k: usize) -> BiasState {
    let mut out = BiasState::default();
    for (j, e) in config.extrinsics.iter().enumerate() {
        let b = synth.biases[j][k];
        out.gyro += (e.rotation * b.gyro) * config.w_gyro[j];
        out.accel += (e.rotation * b.accel) * config.w_accel[j];
    }
    out
}

/// Runs the filter over a fused stream, updating at camera-frame ticks.
/// Returns one estimate per fused sample.
pub fn run_filter(
    fused: &[crate::fusion::VimuSample],
    initial: FilterBelief,
    noise: &NoiseSpec,
    frames: &[CameraFrame],
    cam: &CameraModel,
    gravity: &Vec3,
) -> Result<Vec<EstimateSample>, ScenarioError> {
    let mut belief = initial;
    let mut estimates = Vec::with_capacity(fused.len());
    let mut frames = frames.iter().peekable();
    let estimate = |t: f64, b: &FilterBelief| EstimateSample {
        t,
        state: b.state,
        sigmas: b.sigmas(),
    };
    if let Some(first) = fused.first() {
        estimates.push(estimate(first.t, &belief));
    }
    for pair in fused.windows(2) {
        belief = propagate(&belief, &pair[0], &pair[1], noise, gravity)?;
        while frames.peek().is_some_and(|f| f.t < pair[1].t) {
            frames.next();
        }
        if let Some(frame) = frames.next_if(|f| f.t == pair[1].t) {
            belief = update_landmarks(&belief, &frame.observations, cam)?;
        }
        estimates.push(estimate(pair[1].t, &belief));
    }
    Ok(estimates)
}

/// One complete run of `preset` with `seed` against shared truth and frames.
pub fn run_single(
    scenario: &Scenario,
    preset: RigPreset,
    seed: u64,
    gt: &GroundTruth,
    frames: &[CameraFrame],
) -> Result<RunOutput, ScenarioError> {
    let started = std::time::Instant::now();
    let rig = scenario.rig(preset, seed);
    let imus: Vec<RigImu> = rig.iter().map(|(_, imu)| *imu).collect();
    let synth = synth_multi_imu(gt, &imus, seed)?;

    let extrinsics: Vec<ImuExtrinsics> = imus.iter().map(|i| i.extrinsics).collect();
    let specs: Vec<NoiseSpec> = imus.iter().map(|i| i.noise).collect();
    let config = VimuConfig::solve(extrinsics, &specs, scenario.gyro_weighting.into())?;
    let fused = fuse_stream(&config, &synth.streams, SyncPolicy::default())?;

    // Combined initial-bias uncertainty under the chosen weights.
    let weighted = |w: &[f64], s: f64| s * w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let truth0 = &gt.samples[0];
    let initial = FilterBelief::new(
        NavState {
            rotation: truth0.rotation,
            velocity: truth0.velocity,
            position: truth0.position,
            ..Default::default()
        },
        &InitialSigmas {
            attitude: scenario.filter.attitude_sigma,
            velocity: scenario.filter.velocity_sigma,
            position: scenario.filter.position_sigma,
            gyro_bias: weighted(&config.w_gyro, scenario.initial_gyro_bias_sigma),
            accel_bias: weighted(&config.w_accel, scenario.initial_accel_bias_sigma),
        },
    );
    let estimates = run_filter(&fused.samples, initial, &config.fused_noise, frames, &scenario.camera, &gt.gravity)?;
    let errors = compute_errors(&estimates, gt)?;
    let mut summary = summarize(&errors, preset.name(), seed)?;
    summary.wall_time_s = started.elapsed().as_secs_f64();
    Ok(RunOutput {
        preset,
        seed,
        imu_ids: rig.iter().map(|(id, _)| *id).collect(),
        config,
        synth,
        fused,
        estimates,
        errors,
        summary,
    })
}
