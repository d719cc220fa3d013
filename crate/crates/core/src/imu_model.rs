//! Physical IMU measurement model: extrinsics, white noise, bias random walk
//! and the lever-arm terms sensed by an offset accelerometer.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{skew, Rotation, Vec3};

/// Per-IMU noise intensities, stored as per-sample standard deviations at `rate_hz`.
///
/// `sigma_bg`/`sigma_ba` are the bias increments accumulated over one sample
/// period; a step of length `dt` has drift std `sigma·sqrt(dt·rate_hz)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Gyro white noise (rad/s).
    pub sigma_g: f64,
    /// Accel white noise (m/s²).
    pub sigma_a: f64,
    /// Gyro bias drift per sample (rad/s).
    pub sigma_bg: f64,
    /// Accel bias drift per sample (m/s²).
    pub sigma_ba: f64,
    pub rate_hz: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::from_densities(0.005 / 10.0, 0.05 / 10.0, 1e-4, 1e-3, 100.0)
    }
}

impl NoiseSpec {
    /// Converts continuous-time densities: white noise in unit/√Hz and bias
    /// random walk in unit/s/√Hz (equivalently unit/√s).
    pub fn from_densities(gyro_nd: f64, accel_nd: f64, gyro_rw: f64, accel_rw: f64, rate_hz: f64) -> Self {
        let sqrt_rate = rate_hz.sqrt();
        Self {
            sigma_g: gyro_nd * sqrt_rate,
            sigma_a: accel_nd * sqrt_rate,
            sigma_bg: gyro_rw / sqrt_rate,
            sigma_ba: accel_rw / sqrt_rate,
            rate_hz,
        }
    }

    /// Noise-free spec at the given rate.
    pub fn noiseless(rate_hz: f64) -> Self {
        Self {
            sigma_g: 0.0,
            sigma_a: 0.0,
            sigma_bg: 0.0,
            sigma_ba: 0.0,
            rate_hz,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.sigma_g, self.sigma_a, self.sigma_bg, self.sigma_ba]
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0)
            && self.rate_hz.is_finite()
            && self.rate_hz > 0.0
    }

    /// Bias drift std over an interval of `dt` seconds, `(gyro, accel)`.
    pub fn bias_step_sigmas(&self, dt: f64) -> (f64, f64) {
        let scale = (dt * self.rate_hz).sqrt();
        (self.sigma_bg * scale, self.sigma_ba * scale)
    }
}

/// Fixed mounting of a physical IMU in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuExtrinsics {
    /// IMU → vehicle rotation.
    pub rotation: Rotation,
    /// IMU origin in the vehicle frame (m).
    pub position: Vec3,
}

impl ImuExtrinsics {
    pub fn new(rotation: Rotation, position: Vec3) -> Self {
        Self { rotation, position }
    }
}

/// One timestamped reading in the sensor's own frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vec3,
    pub accel: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BiasState {
    pub gyro: Vec3,
    pub accel: Vec3,
}

impl BiasState {
    pub fn new(gyro: Vec3, accel: Vec3) -> Self {
        Self { gyro, accel }
    }
}

/// `Cᵀ·ω + b_g + n`.
pub fn synth_gyro(extr: &ImuExtrinsics, omega: &Vec3, bias: &BiasState, noise: &Vec3) -> Vec3 {
    extr.rotation.transpose() * *omega + bias.gyro + noise
}

/// `Cᵀ·(a + ω^ω^r + α^r) + b_a + n` where `a` is the specific force at the
/// vehicle origin expressed in the vehicle frame.
pub fn synth_accel(
    extr: &ImuExtrinsics,
    specific_force: &Vec3,
    omega: &Vec3,
    alpha: &Vec3,
    bias: &BiasState,
    noise: &Vec3,
) -> Vec3 {
    let r = &extr.position;
    let w = skew(omega);
    let lever = w * (w * r) + skew(alpha) * r;
    extr.rotation.transpose() * (specific_force + lever) + bias.accel + noise
}

/// Isotropic Gaussian draw with per-axis std `sigma`.
pub fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec3 {
    let mut v = Vec3::zeros();
    for k in 0..3 {
        let z: f64 = rng.sample(StandardNormal);
        v[k] = sigma * z;
    }
    v
}

/// Advances both biases by one random-walk step of length `dt`.
///
/// Always consumes six normal draws so that a seeded stream stays aligned
/// regardless of whether the intensities are zero.
pub fn step_bias<R: Rng + ?Sized>(bias: &BiasState, spec: &NoiseSpec, dt: f64, rng: &mut R) -> BiasState {
    let (sg, sa) = spec.bias_step_sigmas(dt);
    let dg = gaussian3(rng, sg);
    let da = gaussian3(rng, sa);
    BiasState {
        gyro: bias.gyro + dg,
        accel: bias.accel + da,
    }
}
