//! Averaging-weight selection.
//!
//! [`solve_placement_weights`] finds the minimum-noise weights that put the
//! virtual IMU at the origin of the frame the positions are expressed in:
//!
//! ```text
//! min ½ Σ (w_j σ_j)²   s.t.   Σ w_j r_j = 0,   Σ w_j = 1
//! ```
//!
//! The closed form comes from the KKT system. With `R = [r_1 … r_n]`,
//! `Σ = diag(σ_j²)`, `R̄ = R Σ⁻¹` and `r̄ = R̄ 1`:
//!
//! ```text
//! ŵ = Σ⁻¹ (1 − Rᵀ (R̄ Rᵀ)⁺ r̄),    w = ŵ / 1ᵀŵ
//! ```
//!
//! The solver evaluates the same minimizer through an SVD of the noise-scaled
//! 4×n constraint matrix, which keeps the constraints tight on badly
//! conditioned rigs.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use thiserror::Error;

use crate::geometry::Vec3;

/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;
/// Largest distance (m) between the target and the IMUs' affine hull that is still feasible.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;
/// `|1ᵀŵ|` below this is treated as a degenerate normalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight problem needs at least one IMU")]
    Empty,
    #[error("{positions} positions but {sigmas} noise levels")]
    LengthMismatch { positions: usize, sigmas: usize },
    #[error("noise level of IMU {index} must be positive and finite, got {sigma}")]
    InvalidSigma { index: usize, sigma: f64 },
    #[error("non-finite position for IMU {index}")]
    InvalidPosition { index: usize },
    #[error(
        "target lies outside the affine span of the IMU positions; nearest achievable placement residual ({:.6}, {:.6}, {:.6}) m",
        nearest_residual.x, nearest_residual.y, nearest_residual.z
    )]
    Infeasible { nearest_residual: Vec3 },
    #[error("weight normalization is degenerate (1ᵀŵ = {sum:e})")]
    DegenerateNormalization { sum: f64 },
}

/// IMU positions relative to the desired VIMU origin, with isotropic noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProblem {
    positions: Vec<Vec3>,
    sigmas: Vec<f64>,
}

impl WeightProblem {
    pub fn new(positions: Vec<Vec3>, sigmas: Vec<f64>) -> Result<Self, WeightError> {
        if positions.len() != sigmas.len() {
            return Err(WeightError::LengthMismatch {
                positions: positions.len(),
                sigmas: sigmas.len(),
            });
        }
        if positions.is_empty() {
            return Err(WeightError::Empty);
        }
        validate_sigmas(&sigmas)?;
        if let Some(index) = positions.iter().position(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(WeightError::InvalidPosition { index });
        }
        Ok(Self { positions, sigmas })
    }

    /// Same positions, all IMUs sharing one noise level.
    pub fn equal_noise(positions: Vec<Vec3>, sigma: f64) -> Result<Self, WeightError> {
        let n = positions.len();
        Self::new(positions, vec![sigma; n])
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Re-expresses the positions relative to `target`.
    pub fn recentered(&self, target: &Vec3) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p - target).collect(),
            sigmas: self.sigmas.clone(),
        }
    }

    /// `½ Σ (w_j σ_j)²`.
    pub fn objective(&self, weights: &[f64]) -> f64 {
        0.5 * fused_variance(weights, &self.sigmas)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub weights: Vec<f64>,
    /// `sqrt(Σ (w_j σ_j)²)`.
    pub fused_sigma: f64,
    /// `Σ w_j r_j` (m); zero when the VIMU sits at the target.
    pub placement_residual: Vec3,
    /// `Σ w_j²`; above one, averaging amplifies the noise of identical IMUs.
    pub weight_norm_sq: f64,
}

impl WeightSolution {
    fn from_weights(weights: Vec<f64>, positions: &[Vec3], sigmas: &[f64]) -> Self {
        let fused_sigma = fused_variance(&weights, sigmas).sqrt();
        let placement_residual = placement_of(&weights, positions);
        let weight_norm_sq = weights.iter().map(|w| w * w).sum();
        Self {
            weights,
            fused_sigma,
            placement_residual,
            weight_norm_sq,
        }
    }

    pub fn amplifies_noise(&self) -> bool {
        self.weight_norm_sq > 1.0
    }
}

/// Summary checks applicable to any weight vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDiagnostics {
    pub sum: f64,
    pub norm_sq: f64,
    pub min_weight: f64,
}

impl WeightDiagnostics {
    pub fn of(weights: &[f64]) -> Self {
        Self {
            sum: weights.iter().sum(),
            norm_sq: weights.iter().map(|w| w * w).sum(),
            min_weight: weights.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn sums_to_one(&self, tol: f64) -> bool {
        (self.sum - 1.0).abs() <= tol
    }

    /// `Σw² > 1`: the average is noisier than one of the (identical) inputs.
    pub fn amplifies_noise(&self) -> bool {
        self.norm_sq > 1.0
    }

    pub fn has_negative(&self) -> bool {
        self.min_weight < 0.0
    }

    /// Std of the average of identical IMUs with std `sigma`.
    pub fn fused_sigma_identical(&self, sigma: f64) -> f64 {
        sigma * self.norm_sq.sqrt()
    }
}

/// `Σ w_j r_j`. Panics if the slices differ in length.
pub fn placement_of(weights: &[f64], positions: &[Vec3]) -> Vec3 {
    assert_eq!(weights.len(), positions.len(), "weights and positions differ in length");
    weights
        .iter()
        .zip(positions)
        .fold(Vec3::zeros(), |acc, (w, r)| acc + r * *w)
}

/// `Σ (w_j σ_j)²`.
pub fn fused_variance(weights: &[f64], sigmas: &[f64]) -> f64 {
    weights
        .iter()
        .zip(sigmas)
        .map(|(w, s)| (w * s) * (w * s))
        .sum()
}

fn validate_sigmas(sigmas: &[f64]) -> Result<(), WeightError> {
    if let Some((index, &sigma)) = sigmas
        .iter()
        .enumerate()
        .find(|(_, s)| !(s.is_finite() && **s > 0.0))
    {
        return Err(WeightError::InvalidSigma { index, sigma });
    }
    Ok(())
}

/// Inverse-variance weights: the minimizer of `Σ (w_j σ_j)²` subject only to `Σ w = 1`.
///
/// The placement residual is reported against `positions` when given, else zero.
pub fn solve_noise_only_weights(sigmas: &[f64], positions: Option<&[Vec3]>) -> Result<WeightSolution, WeightError> {
    if sigmas.is_empty() {
        return Err(WeightError::Empty);
    }
    validate_sigmas(sigmas)?;
    let inv: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
    let total: f64 = inv.iter().sum();
    let weights: Vec<f64> = inv.iter().map(|x| x / total).collect();
    let zeros;
    let positions = match positions {
        Some(p) => {
            if p.len() != sigmas.len() {
                return Err(WeightError::LengthMismatch {
                    positions: p.len(),
                    sigmas: sigmas.len(),
                });
            }
            p
        }
        None => {
            zeros = vec![Vec3::zeros(); sigmas.len()];
            &zeros
        }
    };
    Ok(WeightSolution::from_weights(weights, positions, sigmas))
}

/// Pseudo-inverse of a symmetric PSD 3×3 matrix via eigendecomposition.
fn symmetric_pinv(m: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(*m);
    let largest = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    if largest == 0.0 {
        return Matrix3::zeros();
    }
    let cutoff = PINV_RELATIVE_CUTOFF * largest;
    let mut out = Matrix3::zeros();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff {
            let v = eig.eigenvectors.column(k);
            out += v * v.transpose() / lambda;
        }
    }
    out
}

/// Residual `Σ w r` of the affine combination closest to the origin, i.e.
/// the point of the affine hull of `positions` nearest the target.
pub fn nearest_achievable_residual(positions: &[Vec3]) -> Vec3 {
    let anchor = positions[0];
    if positions.len() == 1 {
        return anchor;
    }
    let dirs = DMatrix::from_fn(3, positions.len() - 1, |i, j| positions[j + 1][i] - anchor[i]);
    let svd = dirs.svd(true, true);
    let largest = svd.singular_values.iter().fold(0.0_f64, |a, s| a.max(*s));
    if largest == 0.0 {
        return anchor;
    }
    let u = svd.u.expect("svd u");
    // Remove the component of the anchor that lies in the span of the directions.
    let mut residual = anchor;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > PINV_RELATIVE_CUTOFF * largest {
            let basis = Vec3::new(u[(0, k)], u[(1, k)], u[(2, k)]);
            residual -= basis * basis.dot(&anchor);
        }
    }
    residual
}

fn check_feasible(positions: &[Vec3]) -> Result<(), WeightError> {
    let nearest = nearest_achievable_residual(positions);
    if nearest.norm() > FEASIBILITY_TOLERANCE {
        return Err(WeightError::Infeasible {
            nearest_residual: nearest,
        });
    }
    Ok(())
}

/// Minimum-noise weights placing the VIMU at the origin of the positions' frame.
///
/// With `u_j = σ_j w_j` the objective becomes `½‖u‖²`, so the minimizer is
/// the minimum-norm solution of `[1ᵀ; R] D u = e₁`, `D = diag(1/σ_j)`. It is
/// the same point as [`closed_form_weights`], but taken from an SVD of the
/// 4×n constraint matrix instead of `R̄Rᵀ`, whose condition number is the
/// square of it: on nearly coplanar rigs the closed form loses ~7 digits of
/// the placement constraint.
pub fn solve_placement_weights(problem: &WeightProblem) -> Result<WeightSolution, WeightError> {
    let positions = &problem.positions;
    let sigmas = &problem.sigmas;
    check_feasible(positions)?;

    let n = positions.len();
    let scaled = DMatrix::from_fn(4, n, |i, j| if i == 0 { 1.0 } else { positions[j][i - 1] } / sigmas[j]);
    let svd = scaled.svd(true, true);
    let u_mat = svd.u.as_ref().expect("svd u");
    let v_t = svd.v_t.as_ref().expect("svd v_t");
    let largest = svd.singular_values.max();
    // u = V S⁺ Uᵀ e₁
    let mut u = nalgebra::DVector::zeros(n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > PINV_RELATIVE_CUTOFF * largest {
            u += v_t.row(k).transpose() * (u_mat[(0, k)] / s);
        }
    }
    let weights = u.iter().zip(sigmas).map(|(u, s)| u / s).collect();
    Ok(WeightSolution::from_weights(weights, positions, sigmas))
}

/// The textbook closed form `ŵ = Σ⁻¹(1 − Rᵀ(R̄Rᵀ)⁺ r̄)`, `w = ŵ / 1ᵀŵ`.
/// Kept as a reference; [`solve_placement_weights`] is better conditioned.
pub fn closed_form_weights(problem: &WeightProblem) -> Result<WeightSolution, WeightError> {
    let positions = &problem.positions;
    let sigmas = &problem.sigmas;
    check_feasible(positions)?;

    // R̄Rᵀ = Σ r rᵀ / σ², r̄ = Σ r / σ².
    let mut gram = Matrix3::zeros();
    let mut r_bar = Vec3::zeros();
    for (r, s) in positions.iter().zip(sigmas) {
        let inv_var = 1.0 / (s * s);
        gram += r * r.transpose() * inv_var;
        r_bar += r * inv_var;
    }
    let lambda_dir = symmetric_pinv(&gram) * r_bar;

    let w_hat: Vec<f64> = positions
        .iter()
        .zip(sigmas)
        .map(|(r, s)| (1.0 - r.dot(&lambda_dir)) / (s * s))
        .collect();
    let sum: f64 = w_hat.iter().sum();
    if sum.abs() < NORMALIZATION_TOLERANCE {
        return Err(WeightError::DegenerateNormalization { sum });
    }
    let weights = w_hat.into_iter().map(|w| w / sum).collect();
    Ok(WeightSolution::from_weights(weights, positions, sigmas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair() {
        let p = WeightProblem::equal_noise(vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)], 0.3).unwrap();
        let s = solve_placement_weights(&p).unwrap();
        assert!((s.weights[0] - 0.5).abs() < 1e-15 && (s.weights[1] - 0.5).abs() < 1e-15);
        assert!((s.fused_sigma - 0.3 / 2f64.sqrt()).abs() < 1e-15);
        assert!(s.placement_residual.norm() < 1e-15);
        assert!(!s.amplifies_noise());
    }

    #[test]
    fn single_imu_at_origin() {
        let p = WeightProblem::new(vec![Vec3::zeros()], vec![0.7]).unwrap();
        let s = solve_placement_weights(&p).unwrap();
        assert_eq!(s.weights, vec![1.0]);
        assert_eq!(s.fused_sigma, 0.7);
    }

    #[test]
    fn single_imu_off_origin_is_infeasible() {
        let p = WeightProblem::new(vec![Vec3::new(0.0, 2.0, 0.0)], vec![1.0]).unwrap();
        match solve_placement_weights(&p) {
            Err(WeightError::Infeasible { nearest_residual }) => {
                assert_eq!(nearest_residual, Vec3::new(0.0, 2.0, 0.0))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collinear_on_and_off_line() {
        let line = vec![
            Vec3::new(-1.0, 1.0, 0.5),
            Vec3::new(0.5, 1.0, 0.5),
            Vec3::new(2.0, 1.0, 0.5),
        ];
        // Target on the line.
        let on = WeightProblem::equal_noise(line.clone(), 1.0).unwrap().recentered(&Vec3::new(0.25, 1.0, 0.5));
        let s = solve_placement_weights(&on).unwrap();
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.placement_residual.norm() < 1e-12);

        // Origin is off the line: residual is the offset of the line from it.
        let off = WeightProblem::equal_noise(line, 1.0).unwrap();
        match solve_placement_weights(&off) {
            Err(WeightError::Infeasible { nearest_residual }) => {
                assert!((nearest_residual - Vec3::new(0.0, 1.0, 0.5)).norm() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noise_only_examples() {
        let s = solve_noise_only_weights(&[0.2; 4], None).unwrap();
        for w in &s.weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
        assert!((s.fused_sigma - 0.1).abs() < 1e-15);

        let s = solve_noise_only_weights(&[1.0, 2.0], None).unwrap();
        assert!((s.weights[0] - 0.8).abs() < 1e-15 && (s.weights[1] - 0.2).abs() < 1e-15);
        assert!((s.fused_sigma - 0.8f64.sqrt()).abs() < 1e-15);

        assert_eq!(solve_noise_only_weights(&[3.0], None).unwrap().weights, vec![1.0]);
    }

    #[test]
    fn noise_only_matches_grid_search() {
        // Two IMUs: w = (t, 1 − t); scan t.
        let sigmas = [1.0, 2.0];
        let best = (0..=100_000)
            .map(|k| -1.0 + 3.0 * k as f64 / 100_000.0)
            .min_by(|a, b| {
                fused_variance(&[*a, 1.0 - a], &sigmas)
                    .partial_cmp(&fused_variance(&[*b, 1.0 - b], &sigmas))
                    .unwrap()
            })
            .unwrap();
        let s = solve_noise_only_weights(&sigmas, None).unwrap();
        assert!((s.weights[0] - best).abs() < 3e-5);
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(WeightProblem::new(vec![], vec![]), Err(WeightError::Empty));
        assert!(matches!(
            WeightProblem::new(vec![Vec3::zeros()], vec![1.0, 2.0]),
            Err(WeightError::LengthMismatch { .. })
        ));
        assert!(matches!(
            WeightProblem::new(vec![Vec3::zeros()], vec![0.0]),
            Err(WeightError::InvalidSigma { index: 0, .. })
        ));
        assert!(matches!(
            solve_noise_only_weights(&[1.0, -1.0], None),
            Err(WeightError::InvalidSigma { index: 1, .. })
        ));
    }

    #[test]
    fn reference_weight_vectors() {
        let third = WeightDiagnostics::of(&[1.0 / 3.0; 3]);
        assert!(third.sums_to_one(1e-12) && !third.amplifies_noise());

        // Given to four decimals, so the sum is only good to rounding.
        let centered = WeightDiagnostics::of(&[0.4944, 0.1546, 0.3509]);
        assert!(centered.sums_to_one(1.5e-4) && !centered.amplifies_noise());
        assert!(!centered.has_negative());

        let negative = WeightDiagnostics::of(&[1.2, -0.1, -0.1]);
        assert!(negative.sums_to_one(1e-12));
        assert!((negative.norm_sq - 1.46).abs() < 1e-12);
        assert!(negative.amplifies_noise() && negative.has_negative());
        assert!((negative.fused_sigma_identical(1.0) - 1.46f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn placement_examples() {
        let pos = vec![Vec3::new(1.0, 2.0, 0.0), Vec3::new(-1.0, -2.0, 0.0), Vec3::new(0.0, 0.0, 0.0)];
        assert_eq!(placement_of(&[1.0 / 3.0; 3], &pos), Vec3::zeros());
    }

    #[test]
    fn recovers_known_centered_weights() {
        // Synthetic three-IMU rig; the known weights place the VIMU at
        // `target` relative to the rig reference.
        let w_known = [0.4944, 0.1546, 0.3509];
        let total: f64 = w_known.iter().sum();
        let w: Vec<f64> = w_known.iter().map(|x| x / total).collect();
        let target = Vec3::new(0.0186, -0.0012, -0.0046);
        let raw = vec![Vec3::new(0.10, 0.02, -0.05), Vec3::new(-0.08, 0.15, 0.03), Vec3::new(-0.04, -0.12, 0.01)];
        let shift = target - placement_of(&w, &raw);
        let positions: Vec<Vec3> = raw.iter().map(|r| r + shift).collect();
        assert!((placement_of(&w, &positions) - target).norm() < 1e-15);

        let problem = WeightProblem::equal_noise(positions, 1.0).unwrap().recentered(&target);
        let s = solve_placement_weights(&problem).unwrap();
        for (got, want) in s.weights.iter().zip(&w) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn closed_form_agrees_on_well_conditioned_rigs() {
        let positions = vec![
            Vec3::new(1.0, 0.2, -0.3),
            Vec3::new(-0.8, 0.5, 0.1),
            Vec3::new(0.1, -1.1, 0.4),
            Vec3::new(-0.2, 0.3, -0.9),
            Vec3::new(0.3, 0.4, 0.9),
        ];
        let p = WeightProblem::new(positions, vec![0.5, 1.0, 1.5, 0.7, 2.0]).unwrap();
        let a = solve_placement_weights(&p).unwrap();
        let b = closed_form_weights(&p).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn nearly_coplanar_rig_keeps_constraints_tight() {
        // Target on a vertex of an almost flat tetrahedron: exact answer e₄.
        let p = [
            Vec3::new(2.318439639105481, 1.0239088238303355, -0.2066975463919949),
            Vec3::new(-0.3890688062329333, 0.9466187529238923, 0.8827781271103003),
            Vec3::new(-0.997539501241542, -2.556080012026958, -1.515398269801441),
            Vec3::new(-0.9318313316310058, 0.5855524352727297, 0.8393176890831353),
        ];
        let problem = WeightProblem::equal_noise(p.to_vec(), 0.3).unwrap().recentered(&p[3]);
        let s = solve_placement_weights(&problem).unwrap();
        assert!(s.placement_residual.amax() < 1e-13, "{:?}", s.placement_residual);
        assert!((s.weights[3] - 1.0).abs() < 1e-10);
        let loose = closed_form_weights(&problem).unwrap();
        assert!(loose.placement_residual.amax() > 1e-9);
    }
}
