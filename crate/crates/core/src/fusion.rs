//! Runtime fusion of several IMUs into one virtual IMU.
//!
//! Every reading is rotated into the VIMU frame and weight-averaged. When the
//! accelerometer weights satisfy `Σ w_j r_j = 0` the centripetal and
//! tangential lever-arm terms cancel, so the average behaves like a single
//! IMU at the VIMU origin. Only the combined biases are ever tracked downstream.

use thiserror::Error;

use crate::geometry::Vec3;
use crate::imu_model::{BiasState, ImuExtrinsics, ImuSample, NoiseSpec};
use crate::weights::{
    fused_variance, placement_of, solve_noise_only_weights, solve_placement_weights, WeightError, WeightProblem,
};

/// Tolerance on `Σw = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-10;
/// Tolerance (m) on the lever-arm elimination condition `Σ w_accel r = 0`.
pub const LEVER_ARM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("expected {expected} readings, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{channel} weights sum to {sum}, expected 1")]
    WeightSum { channel: &'static str, sum: f64 },
    #[error("accelerometer weights leave a lever-arm residual of {residual:e} m")]
    LeverArmResidual { residual: f64 },
    #[error("streams have no common time window")]
    EmptyOverlap,
    #[error("stream {stream} is not strictly increasing at sample {index}")]
    NonMonotonicTimestamps { stream: usize, index: usize },
    #[error(transparent)]
    Weights(#[from] WeightError),
}

/// How gyro weights are chosen relative to the accelerometer weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GyroWeighting {
    /// Inverse-variance weights; gyros have no lever arm to cancel.
    #[default]
    NoiseOnly,
    /// Reuse the placement weights of the accelerometers.
    SameAsAccel,
}

/// Solved virtual-IMU configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct VimuConfig {
    pub extrinsics: Vec<ImuExtrinsics>,
    pub w_gyro: Vec<f64>,
    pub w_accel: Vec<f64>,
    pub fused_noise: NoiseSpec,
}

impl VimuConfig {
    /// Builds a config from explicit weights, enforcing the weight-sum and
    /// lever-arm invariants.
    pub fn new(
        extrinsics: Vec<ImuExtrinsics>,
        w_gyro: Vec<f64>,
        w_accel: Vec<f64>,
        fused_noise: NoiseSpec,
    ) -> Result<Self, FusionError> {
        let n = extrinsics.len();
        for len in [w_gyro.len(), w_accel.len()] {
            if len != n {
                return Err(FusionError::LengthMismatch { expected: n, got: len });
            }
        }
        for (channel, w) in [("gyro", &w_gyro), ("accel", &w_accel)] {
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(FusionError::WeightSum { channel, sum });
            }
        }
        let positions: Vec<Vec3> = extrinsics.iter().map(|e| e.position).collect();
        let residual = placement_of(&w_accel, &positions).norm();
        if residual > LEVER_ARM_TOLERANCE {
            return Err(FusionError::LeverArmResidual { residual });
        }
        Ok(Self {
            extrinsics,
            w_gyro,
            w_accel,
            fused_noise,
        })
    }

    /// Solves both weight vectors for a rig whose positions are already
    /// expressed relative to the desired VIMU origin.
    pub fn solve(extrinsics: Vec<ImuExtrinsics>, specs: &[NoiseSpec], gyro: GyroWeighting) -> Result<Self, FusionError> {
        if specs.len() != extrinsics.len() {
            return Err(FusionError::LengthMismatch {
                expected: extrinsics.len(),
                got: specs.len(),
            });
        }
        let positions: Vec<Vec3> = extrinsics.iter().map(|e| e.position).collect();
        let accel_sigmas = effective_sigmas(specs.iter().map(|s| s.sigma_a));
        let gyro_sigmas = effective_sigmas(specs.iter().map(|s| s.sigma_g));

        let accel = solve_placement_weights(&WeightProblem::new(positions, accel_sigmas)?)?;
        let w_gyro = match gyro {
            GyroWeighting::NoiseOnly => solve_noise_only_weights(&gyro_sigmas, None)?.weights,
            GyroWeighting::SameAsAccel => accel.weights.clone(),
        };
        let w_accel = accel.weights;
        let fused_noise = fused_noise_spec(&w_gyro, &w_accel, specs)?;
        Self::new(extrinsics, w_gyro, w_accel, fused_noise)
    }

    pub fn len(&self) -> usize {
        self.extrinsics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extrinsics.is_empty()
    }

    fn check_len(&self, got: usize) -> Result<(), FusionError> {
        if got != self.len() {
            return Err(FusionError::LengthMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }
}

/// Falls back to equal weighting when any noise level is zero (noiseless rigs).
fn effective_sigmas(sigmas: impl Iterator<Item = f64>) -> Vec<f64> {
    let s: Vec<f64> = sigmas.collect();
    if s.iter().all(|x| x.is_finite() && *x > 0.0) {
        s
    } else {
        vec![1.0; s.len()]
    }
}

/// One fused reading in the VIMU frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VimuSample {
    pub t: f64,
    pub gyro: Vec3,
    pub accel: Vec3,
}

fn weighted_aligned_sum(weights: &[f64], extrinsics: &[ImuExtrinsics], readings: &[Vec3]) -> Vec3 {
    weights
        .iter()
        .zip(extrinsics)
        .zip(readings)
        .fold(Vec3::zeros(), |acc, ((w, e), y)| acc + (e.rotation * *y) * *w)
}

/// `Σ w_gyro_j C_j y_ω_j`.
pub fn fuse_gyro(cfg: &VimuConfig, readings: &[Vec3]) -> Result<Vec3, FusionError> {
    cfg.check_len(readings.len())?;
    Ok(weighted_aligned_sum(&cfg.w_gyro, &cfg.extrinsics, readings))
}

/// `Σ w_accel_j C_j y_a_j`.
pub fn fuse_accel(cfg: &VimuConfig, readings: &[Vec3]) -> Result<Vec3, FusionError> {
    cfg.check_len(readings.len())?;
    Ok(weighted_aligned_sum(&cfg.w_accel, &cfg.extrinsics, readings))
}

/// Fuses one synchronous set of samples; the output takes the first sample's time.
pub fn fuse_samples(cfg: &VimuConfig, samples: &[ImuSample]) -> Result<VimuSample, FusionError> {
    cfg.check_len(samples.len())?;
    let gyro: Vec<Vec3> = samples.iter().map(|s| s.gyro).collect();
    let accel: Vec<Vec3> = samples.iter().map(|s| s.accel).collect();
    Ok(VimuSample {
        t: samples[0].t,
        gyro: fuse_gyro(cfg, &gyro)?,
        accel: fuse_accel(cfg, &accel)?,
    })
}

/// Combined noise of the weighted average: each channel gets
/// `σ̄² = Σ (w_j σ_j)²` with the gyro weights for the gyro channels and the
/// accel weights for the accel channels.
pub fn fused_noise_spec(w_gyro: &[f64], w_accel: &[f64], specs: &[NoiseSpec]) -> Result<NoiseSpec, FusionError> {
    for len in [w_gyro.len(), w_accel.len()] {
        if len != specs.len() {
            return Err(FusionError::LengthMismatch {
                expected: specs.len(),
                got: len,
            });
        }
    }
    if specs.is_empty() {
        return Err(WeightError::Empty.into());
    }
    let channel = |w: &[f64], f: fn(&NoiseSpec) -> f64| {
        let s: Vec<f64> = specs.iter().map(f).collect();
        fused_variance(w, &s).sqrt()
    };
    Ok(NoiseSpec {
        sigma_g: channel(w_gyro, |s| s.sigma_g),
        sigma_a: channel(w_accel, |s| s.sigma_a),
        sigma_bg: channel(w_gyro, |s| s.sigma_bg),
        sigma_ba: channel(w_accel, |s| s.sigma_ba),
        rate_hz: specs[0].rate_hz,
    })
}

/// [`fused_noise_spec`] using a config's weights.
pub fn fused_bias_spec(cfg: &VimuConfig, specs: &[NoiseSpec]) -> Result<NoiseSpec, FusionError> {
    fused_noise_spec(&cfg.w_gyro, &cfg.w_accel, specs)
}

/// Subtracts the combined-bias estimate: `(ȳ_ω − b̄_ω, ȳ_a − b̄_a)`.
pub fn debias(sample: &VimuSample, bias: &BiasState) -> (Vec3, Vec3) {
    (sample.gyro - bias.gyro, sample.accel - bias.accel)
}

/// Resampling rules for [`fuse_stream`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncPolicy {
    /// A tick is dropped when any stream's bracketing samples are further
    /// apart than this many nominal periods of that stream.
    pub max_gap_periods: f64,
}

impl Default for SyncPolicy {
    fn default() -> Self {
        Self { max_gap_periods: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FuseStats {
    pub samples_in: usize,
    pub samples_out: usize,
    pub dropped_gaps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedStream {
    pub samples: Vec<VimuSample>,
    pub stats: FuseStats,
}

fn check_monotonic(stream: usize, samples: &[ImuSample]) -> Result<(), FusionError> {
    for (index, pair) in samples.windows(2).enumerate() {
        if !(pair[1].t > pair[0].t) {
            return Err(FusionError::NonMonotonicTimestamps { stream, index: index + 1 });
        }
    }
    Ok(())
}

fn median_period(samples: &[ImuSample]) -> f64 {
    if samples.len() < 2 {
        return f64::INFINITY;
    }
    let mut dts: Vec<f64> = samples.windows(2).map(|p| p[1].t - p[0].t).collect();
    dts.sort_by(f64::total_cmp);
    dts[dts.len() / 2]
}

/// Linear interpolation cursor over one time-sorted stream.
struct Cursor<'a> {
    samples: &'a [ImuSample],
    idx: usize,
    max_gap: f64,
}

impl Cursor<'_> {
    /// Reading at `t`, or `None` when the bracketing gap is too wide.
    fn at(&mut self, t: f64) -> Option<(Vec3, Vec3)> {
        let s = self.samples;
        while self.idx + 1 < s.len() && s[self.idx + 1].t <= t {
            self.idx += 1;
        }
        let a = &s[self.idx];
        if a.t == t {
            return Some((a.gyro, a.accel));
        }
        let b = s.get(self.idx + 1)?;
        if b.t - a.t > self.max_gap {
            return None;
        }
        let u = (t - a.t) / (b.t - a.t);
        Some((a.gyro + (b.gyro - a.gyro) * u, a.accel + (b.accel - a.accel) * u))
    }
}

/// Resamples every stream onto stream 0's timestamps and fuses tick by tick.
///
/// Only ticks inside the common time window are emitted.
pub fn fuse_stream(cfg: &VimuConfig, streams: &[Vec<ImuSample>], policy: SyncPolicy) -> Result<FusedStream, FusionError> {
    cfg.check_len(streams.len())?;
    for (k, s) in streams.iter().enumerate() {
        check_monotonic(k, s)?;
    }
    if streams.iter().any(|s| s.is_empty()) {
        return Err(FusionError::EmptyOverlap);
    }
    let start = streams.iter().map(|s| s[0].t).fold(f64::NEG_INFINITY, f64::max);
    let end = streams.iter().map(|s| s[s.len() - 1].t).fold(f64::INFINITY, f64::min);
    if start > end {
        return Err(FusionError::EmptyOverlap);
    }

    let mut cursors: Vec<Cursor> = streams
        .iter()
        .map(|s| Cursor {
            samples: s,
            idx: 0,
            max_gap: policy.max_gap_periods * median_period(s),
        })
        .collect();

    let mut stats = FuseStats {
        samples_in: streams.iter().map(Vec::len).sum(),
        ..Default::default()
    };
    let mut out = Vec::new();
    let mut gyro = vec![Vec3::zeros(); streams.len()];
    let mut accel = vec![Vec3::zeros(); streams.len()];
    'ticks: for tick in streams[0].iter().filter(|s| s.t >= start && s.t <= end) {
        for (j, cursor) in cursors.iter_mut().enumerate() {
            match cursor.at(tick.t) {
                Some((g, a)) => {
                    gyro[j] = g;
                    accel[j] = a;
                }
                None => {
                    stats.dropped_gaps += 1;
                    continue 'ticks;
                }
            }
        }
        out.push(VimuSample {
            t: tick.t,
            gyro: weighted_aligned_sum(&cfg.w_gyro, &cfg.extrinsics, &gyro),
            accel: weighted_aligned_sum(&cfg.w_accel, &cfg.extrinsics, &accel),
        });
    }
    if stats.dropped_gaps > 0 {
        log::warn!("dropped {} ticks across interpolation gaps", stats.dropped_gaps);
    }
    stats.samples_out = out.len();
    Ok(FusedStream { samples: out, stats })
}
