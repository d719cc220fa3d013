//! Rotation and rigid-transform algebra.
//!
//! Rotations are stored as 3×3 matrices. All vectors are `nalgebra::Vector3<f64>`.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

/// Three-vector (units depend on context: m, m/s, rad/s, m/s²).
pub type Vec3 = Vector3<f64>;

/// Below this angle (rad) exp/log switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-7;

/// Renders `v` as the skew-symmetric matrix `v^` with `skew(v) * u == v × u`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Inverse of [`skew`]; reads the axial vector of the antisymmetric part.
pub fn vee(m: &Matrix3<f64>) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix that the caller guarantees is orthonormal with det +1.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Nearest rotation to `m` in the Frobenius sense (polar projection).
    pub fn project(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u_fixed = u;
            u_fixed.column_mut(2).neg_mut();
            r = u_fixed * v_t;
        }
        Self(r)
    }

    /// Largest absolute entry of `RᵀR − I`, plus the determinant error.
    pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
        let gram = m.transpose() * m - Matrix3::identity();
        gram.amax().max((m.determinant() - 1.0).abs())
    }

    pub fn about_x(angle: f64) -> Self {
        Self::exp(&Vec3::new(angle, 0.0, 0.0))
    }

    pub fn about_y(angle: f64) -> Self {
        Self::exp(&Vec3::new(0.0, angle, 0.0))
    }

    pub fn about_z(angle: f64) -> Self {
        Self::exp(&Vec3::new(0.0, 0.0, angle))
    }

    /// Exponential map (Rodrigues formula).
    pub fn exp(phi: &Vec3) -> Self {
        let theta = phi.norm();
        let k = skew(phi);
        let k2 = k * k;
        let (a, b) = if theta < SMALL_ANGLE {
            (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
        };
        Self(Matrix3::identity() + k * a + k2 * b)
    }

    /// Logarithm map, returning an axis-angle vector with norm in `[0, π]`.
    pub fn log(&self) -> Vec3 {
        let m = &self.0;
        let axial = vee(m);
        let sin_theta = axial.norm();
        let cos_theta = 0.5 * (m.trace() - 1.0);
        let theta = sin_theta.atan2(cos_theta);

        if theta < SMALL_ANGLE {
            // θ/sin θ ≈ 1 + θ²/6
            return axial * (1.0 + theta * theta / 6.0);
        }
        if theta < std::f64::consts::PI - 1e-3 {
            return axial * (theta / sin_theta);
        }

        // Near π the antisymmetric part vanishes; recover the axis from the
        // symmetric part: (R + Rᵀ)/2 = cos θ·I + (1 − cos θ)·aaᵀ.
        let sym = (m + m.transpose()) * 0.5;
        let outer = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
        let diag = outer.diagonal();
        let col = diag.imax();
        let mut axis: Vec3 = outer.column(col).into_owned();
        axis /= axis.norm();
        if axis.dot(&axial) < 0.0 {
            axis = -axis;
        }
        axis * theta
    }

    /// Right Jacobian of SO(3): `exp(φ + δ) ≈ exp(φ)·exp(J_r(φ)·δ)`.
    pub fn right_jacobian(phi: &Vec3) -> Matrix3<f64> {
        let theta = phi.norm();
        let k = skew(phi);
        let k2 = k * k;
        let (a, b) = if theta < SMALL_ANGLE {
            (0.5 - theta * theta / 24.0, 1.0 / 6.0 - theta * theta / 120.0)
        } else {
            let t2 = theta * theta;
            ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
        };
        Matrix3::identity() - k * a + k2 * b
    }

    /// Hamilton unit quaternion `(w, x, y, z)`; the input is normalized.
    pub fn from_quaternion_wxyz(q: [f64; 4]) -> Self {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        Self(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// Re-orthonormalizes in place; used after every integration step.
    pub fn renormalized(&self) -> Self {
        Self::project(&self.0)
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)], //
            m[(1, 0)], m[(1, 1)], m[(1, 2)], //
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    pub fn from_row_major_unchecked(e: &[f64; 9]) -> Self {
        Self(Matrix3::from_row_slice(e))
    }

    /// Angle (rad) of the relative rotation `selfᵀ·other`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.transpose() * *other).log().norm()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rigid transform `T = [C r; 0 1]` mapping frame-local points into the parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// `C·x + r`.
    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        self.rotation * *x + self.translation
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}
