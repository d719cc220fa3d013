//! Left-invariant EKF over attitude, velocity and position, augmented with
//! the combined (fused) gyro and accel biases.
//!
//! The error state is `ξ = [φ, δv, δp, δb_g, δb_a]`, with the true state
//! obtained from the estimate by
//!
//! ```text
//! C = Ĉ·Exp(φ),  v = v̂ + Ĉ·δv,  p = p̂ + Ĉ·δp,  b = b̂ + δb
//! ```
//!
//! i.e. the pose errors live in the body frame of the estimate. Propagation
//! consumes consecutive VIMU samples and averages their endpoint values,
//! the same scheme the simulator integrates ground truth with, and the
//! transition Jacobian is the exact derivative of that discrete step.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector};
use rand::Rng;
use thiserror::Error;

use crate::camera::CameraModel;
use crate::fusion::VimuSample;
use crate::geometry::{skew, Rotation, Vec3};
use crate::imu_model::{gaussian3, NoiseSpec};
use crate::sim::LandmarkObs;

pub const STATE_DIM: usize = 15;
pub type ErrorVec = SVector<f64, STATE_DIM>;
pub type Covariance = SMatrix<f64, STATE_DIM, STATE_DIM>;
type NoiseJacobian = SMatrix<f64, STATE_DIM, 12>;

const ATT: usize = 0;
const VEL: usize = 3;
const POS: usize = 6;
const BG: usize = 9;
const BA: usize = 12;

/// Innovation covariances above this condition number are rejected.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("propagation produced a non-finite state")]
    NonFiniteState,
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("innovation covariance is ill-conditioned (condition number {0:e})")]
    SingularInnovation(f64),
    #[error("no usable landmark observations")]
    NoObservations,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NavState {
    /// Vehicle → inertial.
    pub rotation: Rotation,
    pub velocity: Vec3,
    pub position: Vec3,
    pub gyro_bias: Vec3,
    pub accel_bias: Vec3,
}

fn block3(v: &ErrorVec, at: usize) -> Vec3 {
    Vec3::new(v[at], v[at + 1], v[at + 2])
}

impl NavState {
    /// Applies an error-state perturbation.
    pub fn retract(&self, xi: &ErrorVec) -> NavState {
        NavState {
            rotation: self.rotation * Rotation::exp(&block3(xi, ATT)),
            velocity: self.velocity + self.rotation * block3(xi, VEL),
            position: self.position + self.rotation * block3(xi, POS),
            gyro_bias: self.gyro_bias + block3(xi, BG),
            accel_bias: self.accel_bias + block3(xi, BA),
        }
    }

    /// Inverse of [`retract`](Self::retract): the `ξ` with `self.retract(ξ) == other`.
    pub fn local(&self, other: &NavState) -> ErrorVec {
        let rt = self.rotation.transpose();
        let mut xi = ErrorVec::zeros();
        xi.fixed_rows_mut::<3>(ATT).copy_from(&(rt * other.rotation).log());
        xi.fixed_rows_mut::<3>(VEL).copy_from(&(rt * (other.velocity - self.velocity)));
        xi.fixed_rows_mut::<3>(POS).copy_from(&(rt * (other.position - self.position)));
        xi.fixed_rows_mut::<3>(BG).copy_from(&(other.gyro_bias - self.gyro_bias));
        xi.fixed_rows_mut::<3>(BA).copy_from(&(other.accel_bias - self.accel_bias));
        xi
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.matrix().iter().all(|x| x.is_finite())
            && [self.velocity, self.position, self.gyro_bias, self.accel_bias]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterBelief {
    pub state: NavState,
    pub cov: Covariance,
}

/// Initial one-sigma uncertainties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSigmas {
    pub attitude: f64,
    pub velocity: f64,
    pub position: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
}

impl Default for InitialSigmas {
    fn default() -> Self {
        Self {
            attitude: 0.01,
            velocity: 0.05,
            position: 0.05,
            gyro_bias: 0.005,
            accel_bias: 0.05,
        }
    }
}

impl FilterBelief {
    pub fn new(state: NavState, sigmas: &InitialSigmas) -> Self {
        let mut cov = Covariance::zeros();
        for (at, s) in [
            (ATT, sigmas.attitude),
            (VEL, sigmas.velocity),
            (POS, sigmas.position),
            (BG, sigmas.gyro_bias),
            (BA, sigmas.accel_bias),
        ] {
            for k in 0..3 {
                cov[(at + k, at + k)] = s * s;
            }
        }
        Self { state, cov }
    }

    /// Marginal standard deviations of the error state.
    pub fn sigmas(&self) -> ErrorVec {
        self.cov.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

fn symmetrize(p: &Covariance) -> Covariance {
    (p + p.transpose()) * 0.5
}

/// Noise-free mean propagation between two consecutive samples.
pub fn propagate_state(state: &NavState, start: &VimuSample, end: &VimuSample, gravity: &Vec3) -> NavState {
    let dt = end.t - start.t;
    let omega = (start.gyro + end.gyro) * 0.5 - state.gyro_bias;
    let rotation = (state.rotation * Rotation::exp(&(omega * dt))).renormalized();
    let a0 = start.accel - state.accel_bias;
    let a1 = end.accel - state.accel_bias;
    let accel = (state.rotation * a0 + rotation * a1) * 0.5 - gravity;
    NavState {
        rotation,
        velocity: state.velocity + accel * dt,
        position: state.position + state.velocity * dt + accel * (0.5 * dt * dt),
        gyro_bias: state.gyro_bias,
        accel_bias: state.accel_bias,
    }
}

/// Transition Jacobian `∂ξ'/∂ξ` and noise Jacobian for one propagation step.
///
/// Noise inputs are `[n_ω, n_a, w_g, w_a]`: white noise on the averaged gyro
/// and accel readings, then the bias random-walk increments.
pub fn transition_jacobians(state: &NavState, start: &VimuSample, end: &VimuSample) -> (Covariance, NoiseJacobian) {
    let dt = end.t - start.t;
    let omega = (start.gyro + end.gyro) * 0.5 - state.gyro_bias;
    let step = omega * dt;
    let d = Rotation::exp(&step).transpose();
    let d = *d.matrix();
    let jr = Rotation::right_jacobian(&step);
    let a0 = skew(&(start.accel - state.accel_bias));
    let a1 = skew(&(end.accel - state.accel_bias));
    let id = Matrix3::identity();

    let mut f = Covariance::identity();
    let mut set = |r: usize, c: usize, m: Matrix3<f64>| f.fixed_view_mut::<3, 3>(r, c).copy_from(&m);
    let couple = d * a0 + a1 * d;
    set(ATT, ATT, d);
    set(ATT, BG, -jr * dt);
    set(VEL, ATT, -couple * (0.5 * dt));
    set(VEL, VEL, d);
    set(VEL, BG, a1 * jr * (0.5 * dt * dt));
    set(VEL, BA, -(d + id) * (0.5 * dt));
    set(POS, ATT, -couple * (0.25 * dt * dt));
    set(POS, VEL, d * dt);
    set(POS, POS, d);
    set(POS, BG, a1 * jr * (0.25 * dt * dt * dt));
    set(POS, BA, -(d + id) * (0.25 * dt * dt));

    let mut g = NoiseJacobian::zeros();
    g.fixed_view_mut::<9, 3>(0, 0).copy_from(&f.fixed_view::<9, 3>(0, BG));
    g.fixed_view_mut::<9, 3>(0, 3).copy_from(&f.fixed_view::<9, 3>(0, BA));
    g.fixed_view_mut::<3, 3>(BG, 6).copy_from(&id);
    g.fixed_view_mut::<3, 3>(BA, 9).copy_from(&id);
    (f, g)
}

/// Propagates mean and covariance from `start` to `end`.
pub fn propagate(
    belief: &FilterBelief,
    start: &VimuSample,
    end: &VimuSample,
    noise: &NoiseSpec,
    gravity: &Vec3,
) -> Result<FilterBelief, FilterError> {
    let dt = end.t - start.t;
    if !(dt > 0.0) {
        return Err(FilterError::NonPositiveDt(dt));
    }
    let state = propagate_state(&belief.state, start, end, gravity);
    if !state.is_finite() {
        return Err(FilterError::NonFiniteState);
    }
    let (f, g) = transition_jacobians(&belief.state, start, end);
    let (walk_g, walk_a) = noise.bias_step_sigmas(dt);
    let mut q = SVector::<f64, 12>::zeros();
    for k in 0..3 {
        q[k] = noise.sigma_g * noise.sigma_g;
        q[3 + k] = noise.sigma_a * noise.sigma_a;
        q[6 + k] = walk_g * walk_g;
        q[9 + k] = walk_a * walk_a;
    }
    let cov = f * belief.cov * f.transpose() + g * SMatrix::<f64, 12, 12>::from_diagonal(&q) * g.transpose();
    if !cov.iter().all(|x| x.is_finite()) {
        return Err(FilterError::NonFiniteState);
    }
    Ok(FilterBelief {
        state,
        cov: symmetrize(&cov),
    })
}

/// Landmark position in the camera (= VIMU) frame.
fn camera_point(state: &NavState, landmark: &Vec3) -> Vec3 {
    state.rotation.transpose() * (landmark - state.position)
}

/// Predicted pixel and its 2×15 Jacobian, or `None` behind the camera.
pub fn measurement(state: &NavState, landmark: &Vec3, cam: &CameraModel) -> Option<([f64; 2], SMatrix<f64, 2, STATE_DIM>)> {
    let q = camera_point(state, landmark);
    let pixel = cam.project(&q)?;
    let jp = cam.projection_jacobian(&q);
    let mut h = SMatrix::<f64, 2, STATE_DIM>::zeros();
    h.fixed_view_mut::<2, 3>(0, ATT).copy_from(&(jp * skew(&q)));
    h.fixed_view_mut::<2, 3>(0, POS).copy_from(&(-jp));
    Some((pixel, h))
}

/// Stacked EKF update from one camera frame.
pub fn update_landmarks(belief: &FilterBelief, obs: &[LandmarkObs], cam: &CameraModel) -> Result<FilterBelief, FilterError> {
    let rows: Vec<_> = obs
        .iter()
        .filter_map(|o| measurement(&belief.state, &o.landmark, cam).map(|(px, h)| (o, px, h)))
        .collect();
    if rows.is_empty() {
        return Err(FilterError::NoObservations);
    }
    let m = 2 * rows.len();
    let mut h = DMatrix::<f64>::zeros(m, STATE_DIM);
    let mut resid = DVector::<f64>::zeros(m);
    let mut r_diag = DVector::<f64>::zeros(m);
    for (i, (o, px, hi)) in rows.iter().enumerate() {
        h.view_mut((2 * i, 0), (2, STATE_DIM)).copy_from(hi);
        resid[2 * i] = o.pixel[0] - px[0];
        resid[2 * i + 1] = o.pixel[1] - px[1];
        r_diag[2 * i] = o.sigma_px * o.sigma_px;
        r_diag[2 * i + 1] = o.sigma_px * o.sigma_px;
    }
    let p = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, belief.cov.as_slice());
    let r = DMatrix::from_diagonal(&r_diag);
    let pht = &p * h.transpose();
    let s = &h * &pht + &r;
    let s = (&s + s.transpose()) * 0.5;

    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &l| (lo.min(l), hi.max(l.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_INNOVATION_CONDITION {
        return Err(FilterError::SingularInnovation(condition));
    }
    let chol = s.cholesky().ok_or(FilterError::SingularInnovation(condition))?;
    // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ.
    let gain = chol.solve(&pht.transpose()).transpose();
    let dx = &gain * &resid;
    let ikh = DMatrix::<f64>::identity(STATE_DIM, STATE_DIM) - &gain * &h;
    let p_post = &ikh * &p * ikh.transpose() + &gain * &r * gain.transpose();

    let xi = ErrorVec::from_column_slice(dx.as_slice());
    let state = belief.state.retract(&xi);
    if !state.is_finite() {
        return Err(FilterError::NonFiniteState);
    }
    let cov = Covariance::from_column_slice(p_post.as_slice());
    Ok(FilterBelief {
        state,
        cov: symmetrize(&cov),
    })
}

/// Maximum relative deviation between analytic and finite-difference Jacobians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianReport {
    pub propagation: f64,
    pub measurement: f64,
}

impl JacobianReport {
    pub fn max(&self) -> f64 {
        self.propagation.max(self.measurement)
    }
}

/// Finite-difference step on the error-state manifold.
pub const FD_STEP: f64 = 1e-6;

fn relative_deviation<const R: usize>(analytic: &SMatrix<f64, R, STATE_DIM>, numeric: &SMatrix<f64, R, STATE_DIM>) -> f64 {
    let scale = numeric.amax().max(f64::MIN_POSITIVE);
    (analytic - numeric).amax() / scale
}

/// Compares the analytic propagation and measurement Jacobians at `state`
/// against central differences of the nonlinear models.
pub fn jacobian_check(
    state: &NavState,
    start: &VimuSample,
    end: &VimuSample,
    landmark: &Vec3,
    cam: &CameraModel,
    gravity: &Vec3,
) -> JacobianReport {
    let nominal = propagate_state(state, start, end, gravity);
    let (f, _) = transition_jacobians(state, start, end);
    let mut f_num = Covariance::zeros();
    for k in 0..STATE_DIM {
        let mut e = ErrorVec::zeros();
        e[k] = FD_STEP;
        let plus = nominal.local(&propagate_state(&state.retract(&e), start, end, gravity));
        let minus = nominal.local(&propagate_state(&state.retract(&-e), start, end, gravity));
        f_num.set_column(k, &((plus - minus) / (2.0 * FD_STEP)));
    }

    let measurement_dev = match measurement(state, landmark, cam) {
        Some((_, h)) => {
            let mut h_num = SMatrix::<f64, 2, STATE_DIM>::zeros();
            for k in 0..STATE_DIM {
                let mut e = ErrorVec::zeros();
                e[k] = FD_STEP;
                let plus = measurement(&state.retract(&e), landmark, cam).map(|m| m.0);
                let minus = measurement(&state.retract(&-e), landmark, cam).map(|m| m.0);
                if let (Some(p), Some(m)) = (plus, minus) {
                    for r in 0..2 {
                        h_num[(r, k)] = (p[r] - m[r]) / (2.0 * FD_STEP);
                    }
                }
            }
            relative_deviation(&h, &h_num)
        }
        None => 0.0,
    };
    JacobianReport {
        propagation: relative_deviation(&f, &f_num),
        measurement: measurement_dev,
    }
}

/// A random but well-posed check point: state, two samples 10 ms apart and a
/// landmark 2–10 m in front of the camera.
pub fn random_check_point<R: Rng + ?Sized>(rng: &mut R) -> (NavState, VimuSample, VimuSample, Vec3) {
    let state = NavState {
        rotation: Rotation::exp(&gaussian3(rng, 1.5)),
        velocity: gaussian3(rng, 3.0),
        position: gaussian3(rng, 20.0),
        gyro_bias: gaussian3(rng, 0.05),
        accel_bias: gaussian3(rng, 0.2),
    };
    let t0 = rng.random_range(0.0..100.0);
    let start = VimuSample {
        t: t0,
        gyro: gaussian3(rng, 1.0),
        accel: gaussian3(rng, 3.0) + Vec3::new(0.0, 0.0, 9.81),
    };
    let end = VimuSample {
        t: t0 + 0.01,
        gyro: start.gyro + gaussian3(rng, 0.05),
        accel: start.accel + gaussian3(rng, 0.2),
    };
    let depth = rng.random_range(2.0..10.0);
    let q = Vec3::new(rng.random_range(-0.5..0.5) * depth, rng.random_range(-0.4..0.4) * depth, depth);
    let landmark = state.rotation * q + state.position;
    (state, start, end, landmark)
}
