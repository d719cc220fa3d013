//! Ideal pinhole camera whose frame coincides with the VIMU frame (z forward).

use nalgebra::Matrix2x3;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Points closer than this (m) along the optical axis are not projected.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub width: f64,
    pub height: f64,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// Observation noise std (px).
    pub pixel_sigma: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 480.0,
            focal: 458.0,
            cx: 320.0,
            cy: 240.0,
            pixel_sigma: 1.0,
        }
    }
}

impl CameraModel {
    pub fn project(&self, q: &Vec3) -> Option<[f64; 2]> {
        if q.z <= MIN_DEPTH {
            return None;
        }
        Some([self.focal * q.x / q.z + self.cx, self.focal * q.y / q.z + self.cy])
    }

    /// Point at `depth` along the ray through pixel `(u, v)`.
    pub fn back_project(&self, pixel: [f64; 2], depth: f64) -> Vec3 {
        Vec3::new(
            depth * (pixel[0] - self.cx) / self.focal,
            depth * (pixel[1] - self.cy) / self.focal,
            depth,
        )
    }

    /// d(pixel)/d(q).
    pub fn projection_jacobian(&self, q: &Vec3) -> Matrix2x3<f64> {
        let iz = 1.0 / q.z;
        let f = self.focal;
        Matrix2x3::new(
            f * iz,
            0.0,
            -f * q.x * iz * iz, //
            0.0,
            f * iz,
            -f * q.y * iz * iz,
        )
    }
}
