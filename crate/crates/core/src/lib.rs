//! Virtual-IMU fusion.
//!
//! Several rigidly mounted, physically separated IMUs are combined into one
//! virtual IMU (VIMU) by a weighted average. Choosing accelerometer weights
//! with `Σ w_j r_j = 0` cancels every lever-arm term, so the average can be
//! fed to an ordinary single-IMU estimator, and the VIMU origin can be moved
//! anywhere in the affine hull of the IMUs.

pub mod camera;
pub mod cli;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod imu_model;
pub mod io;
pub mod liekf;
pub mod scenario;
pub mod seeding;
pub mod sim;
pub mod weights;

pub use fusion::{GyroWeighting, VimuConfig, VimuSample};
pub use geometry::{Pose, Rotation, Vec3};
pub use imu_model::{BiasState, ImuExtrinsics, ImuSample, NoiseSpec};
pub use weights::{WeightProblem, WeightSolution};
