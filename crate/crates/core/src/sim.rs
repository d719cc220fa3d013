//! Deterministic simulation world: sinusoidal ground-truth trajectories,
//! multi-IMU measurement synthesis and known-landmark camera observations.
//!
//! The vehicle follows `Ċ = C ω^`, `v̇ = C a − g`, `ṗ = v`, where `a` is the
//! specific force in the vehicle frame. Angular rate and inertial acceleration
//! are sums of sinusoids; the integrator averages the endpoint values of each
//! step, which is second-order accurate and is exactly the scheme the filter
//! uses to propagate IMU samples.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraModel;
use crate::geometry::{Rotation, Vec3};
use crate::imu_model::{gaussian3, step_bias, synth_accel, synth_gyro, BiasState, ImuExtrinsics, ImuSample, NoiseSpec};
use crate::seeding::substream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid trajectory: {0}")]
    InvalidSpec(String),
    #[error("rig has no IMUs")]
    EmptyRig,
    #[error("invalid noise spec for IMU slot {0}")]
    InvalidNoise(usize),
    #[error("camera rate must divide the IMU rate into a whole number of ticks")]
    CameraRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub freq_hz: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Sinusoid {
    pub fn new(amplitude: f64, freq_hz: f64, phase: f64) -> Self {
        Self {
            amplitude,
            freq_hz,
            phase,
        }
    }

    fn value(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.freq_hz * t + self.phase).sin()
    }

    fn derivative(&self, t: f64) -> f64 {
        self.amplitude * TAU * self.freq_hz * (TAU * self.freq_hz * t + self.phase).cos()
    }
}

/// Three per-axis banks of sinusoids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SinusoidBank {
    pub x: Vec<Sinusoid>,
    pub y: Vec<Sinusoid>,
    pub z: Vec<Sinusoid>,
}

impl SinusoidBank {
    fn axes(&self) -> [&[Sinusoid]; 3] {
        [&self.x, &self.y, &self.z]
    }

    pub fn value(&self, t: f64) -> Vec3 {
        let [x, y, z] = self.axes().map(|bank| bank.iter().map(|s| s.value(t)).sum::<f64>());
        Vec3::new(x, y, z)
    }

    pub fn derivative(&self, t: f64) -> Vec3 {
        let [x, y, z] = self.axes().map(|bank| bank.iter().map(|s| s.derivative(t)).sum::<f64>());
        Vec3::new(x, y, z)
    }

    fn is_finite(&self) -> bool {
        self.axes()
            .iter()
            .flat_map(|b| b.iter())
            .all(|s| s.amplitude.is_finite() && s.freq_hz.is_finite() && s.phase.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    /// Body angular rate ω(t) (rad/s).
    pub angular_rate: SinusoidBank,
    /// Inertial-frame kinematic acceleration v̇(t) (m/s²).
    pub acceleration: SinusoidBank,
    pub duration_s: f64,
    /// Gravity vector subtracted in `v̇ = C a − g` (m/s², z up).
    pub gravity: [f64; 3],
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        let s = Sinusoid::new;
        Self {
            angular_rate: SinusoidBank {
                x: vec![s(0.3, 0.1, 0.0), s(0.1, 0.3, 1.0)],
                y: vec![s(0.4, 0.15, 0.5)],
                z: vec![s(0.5, 0.2, 2.0), s(0.1, 0.27, 0.3)],
            },
            acceleration: SinusoidBank {
                x: vec![s(1.0, 0.1, 0.0)],
                y: vec![s(0.8, 0.2, 1.0)],
                z: vec![s(0.5, 0.25, 2.0)],
            },
            duration_s: 120.0,
            gravity: [0.0, 0.0, 9.81],
        }
    }
}

impl TrajectorySpec {
    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(SimError::InvalidSpec(format!("duration {} must be positive", self.duration_s)));
        }
        if !(self.angular_rate.is_finite() && self.acceleration.is_finite() && self.gravity.iter().all(|g| g.is_finite())) {
            return Err(SimError::InvalidSpec("non-finite parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    /// Vehicle → inertial.
    pub rotation: Rotation,
    pub velocity: Vec3,
    pub position: Vec3,
    /// Body angular rate (rad/s).
    pub omega: Vec3,
    /// Specific force in the vehicle frame, `Cᵀ(v̇ + g)` (m/s²).
    pub specific_force: Vec3,
    /// Body angular acceleration (rad/s²).
    pub alpha: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub rate_hz: f64,
    pub gravity: Vec3,
    pub samples: Vec<TruthSample>,
}

impl GroundTruth {
    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> &TruthSample {
        self.samples.last().expect("ground truth is never empty")
    }
}

/// Integrates the trajectory from rest at the origin with identity attitude.
pub fn generate_ground_truth(spec: &TrajectorySpec, rate_hz: f64) -> Result<GroundTruth, SimError> {
    generate_ground_truth_from(spec, rate_hz, Rotation::identity())
}

/// As [`generate_ground_truth`] with a chosen initial attitude.
pub fn generate_ground_truth_from(
    spec: &TrajectorySpec,
    rate_hz: f64,
    initial_attitude: Rotation,
) -> Result<GroundTruth, SimError> {
    spec.validate()?;
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(SimError::InvalidSpec(format!("rate {rate_hz} must be positive")));
    }
    let steps = (spec.duration_s * rate_hz).round() as usize;
    let dt = 1.0 / rate_hz;
    let g = spec.gravity();

    let sample_at = |k: usize, rotation: Rotation, velocity: Vec3, position: Vec3| {
        let t = k as f64 / rate_hz;
        let accel = spec.acceleration.value(t);
        TruthSample {
            t,
            rotation,
            velocity,
            position,
            omega: spec.angular_rate.value(t),
            specific_force: rotation.transpose() * (accel + g),
            alpha: spec.angular_rate.derivative(t),
        }
    };

    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(sample_at(0, initial_attitude, Vec3::zeros(), Vec3::zeros()));
    for k in 0..steps {
        let prev = samples[k];
        let t0 = prev.t;
        let t1 = (k + 1) as f64 / rate_hz;
        let omega_mid = (spec.angular_rate.value(t0) + spec.angular_rate.value(t1)) * 0.5;
        let rotation = (prev.rotation * Rotation::exp(&(omega_mid * dt))).renormalized();
        let accel_mid = (spec.acceleration.value(t0) + spec.acceleration.value(t1)) * 0.5;
        let velocity = prev.velocity + accel_mid * dt;
        let position = prev.position + prev.velocity * dt + accel_mid * (0.5 * dt * dt);
        samples.push(sample_at(k + 1, rotation, velocity, position));
    }
    Ok(GroundTruth { rate_hz, gravity: g, samples })
}

/// One physical IMU of a simulated rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigImu {
    pub extrinsics: ImuExtrinsics,
    pub noise: NoiseSpec,
    pub initial_bias: BiasState,
    /// Substream key for this IMU's noise; IMUs sharing a key share draws.
    pub noise_key: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// One stream per rig IMU, aligned with the ground-truth ticks.
    pub streams: Vec<Vec<ImuSample>>,
    /// True bias of each IMU at each tick.
    pub biases: Vec<Vec<BiasState>>,
}

/// Synthesizes every IMU of `rig` along `gt`.
pub fn synth_multi_imu(gt: &GroundTruth, rig: &[RigImu], seed: u64) -> Result<SynthOutput, SimError> {
    if rig.is_empty() {
        return Err(SimError::EmptyRig);
    }
    if let Some(slot) = rig.iter().position(|imu| !imu.noise.is_valid()) {
        return Err(SimError::InvalidNoise(slot));
    }
    let dt = gt.dt();
    let mut streams = Vec::with_capacity(rig.len());
    let mut biases = Vec::with_capacity(rig.len());
    for imu in rig {
        let mut rng = substream(seed, "imu-noise", imu.noise_key);
        let mut bias = imu.initial_bias;
        let mut stream = Vec::with_capacity(gt.len());
        let mut history = Vec::with_capacity(gt.len());
        for s in &gt.samples {
            let n_g = gaussian3(&mut rng, imu.noise.sigma_g);
            let n_a = gaussian3(&mut rng, imu.noise.sigma_a);
            stream.push(ImuSample {
                t: s.t,
                gyro: synth_gyro(&imu.extrinsics, &s.omega, &bias, &n_g),
                accel: synth_accel(&imu.extrinsics, &s.specific_force, &s.omega, &s.alpha, &bias, &n_a),
            });
            history.push(bias);
            bias = step_bias(&bias, &imu.noise, dt, &mut rng);
        }
        streams.push(stream);
        biases.push(history);
    }
    Ok(SynthOutput { streams, biases })
}

/// A landmark observation with known data association.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkObs {
    pub t: f64,
    /// Observed pixel, noise included.
    pub pixel: [f64; 2],
    /// Exact landmark position in the inertial frame (m).
    pub landmark: Vec3,
    pub sigma_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub t: f64,
    /// Index into the ground-truth samples.
    pub tick: usize,
    pub observations: Vec<LandmarkObs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationSpec {
    pub rate_hz: f64,
    pub landmarks_per_frame: usize,
    pub min_depth: f64,
    pub max_depth: f64,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self {
            rate_hz: 2.0,
            landmarks_per_frame: 20,
            min_depth: 2.0,
            max_depth: 10.0,
        }
    }
}

/// Draws fresh landmarks for every camera frame: uniform pixels, uniform
/// depth, back-projected and moved to the inertial frame with the true pose.
/// Frames fall on the ground-truth ticks `k·(imu_rate / camera_rate)`, k ≥ 1.
pub fn synth_landmark_obs(
    gt: &GroundTruth,
    cam: &CameraModel,
    spec: &ObservationSpec,
    seed: u64,
) -> Result<Vec<CameraFrame>, SimError> {
    let ratio = gt.rate_hz / spec.rate_hz;
    let stride = ratio.round() as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-9 {
        return Err(SimError::CameraRate);
    }
    let mut rng = substream(seed, "camera", 0);
    let mut frames = Vec::new();
    for tick in (stride..gt.len()).step_by(stride) {
        let truth = &gt.samples[tick];
        let observations = (0..spec.landmarks_per_frame)
            .map(|_| {
                let pixel = [rng.random_range(0.0..cam.width), rng.random_range(0.0..cam.height)];
                let depth = rng.random_range(spec.min_depth..=spec.max_depth);
                let q = cam.back_project(pixel, depth);
                let landmark = truth.rotation * q + truth.position;
                let noise = gaussian3(&mut rng, cam.pixel_sigma);
                LandmarkObs {
                    t: truth.t,
                    pixel: [pixel[0] + noise.x, pixel[1] + noise.y],
                    landmark,
                    sigma_px: cam.pixel_sigma,
                }
            })
            .collect();
        frames.push(CameraFrame {
            t: truth.t,
            tick,
            observations,
        });
    }
    Ok(frames)
}
