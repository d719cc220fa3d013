use nalgebra::DMatrix;
use proptest::prelude::*;

use vimu::geometry::Vec3;
use vimu::weights::{
    placement_of, solve_noise_only_weights, solve_placement_weights, WeightDiagnostics, WeightError, WeightProblem,
};

fn vec3() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// 4–8 positions recentered on a convex combination, with sigmas.
fn feasible_problem() -> impl Strategy<Value = WeightProblem> {
    (4usize..=8)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(vec3(), n),
                prop::collection::vec(0.05..1.0f64, n),
                prop::collection::vec(0.3..3.0f64, n),
            )
        })
        .prop_map(|(p, a, s)| {
            let total: f64 = a.iter().sum();
            let centre: Vec3 = p.iter().zip(&a).map(|(r, w)| r * (w / total)).sum();
            WeightProblem::new(p.iter().map(|r| r - centre).collect(), s).unwrap()
        })
}

/// Basis of the null space of the constraint matrix `[1ᵀ; R]`.
fn constraint_null_space(positions: &[Vec3]) -> Vec<Vec<f64>> {
    let n = positions.len();
    let a = DMatrix::from_fn(4, n, |i, j| if i == 0 { 1.0 } else { positions[j][i - 1] });
    let svd = a.transpose().svd(true, false);
    let u = svd.u.unwrap();
    let largest = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-10 * largest).count();
    // Left singular vectors of Aᵀ beyond the rank span null(A).
    let full = DMatrix::from_fn(n, n, |i, j| if j < u.ncols() { u[(i, j)] } else { 0.0 });
    let q = if u.ncols() < n { full.qr().q() } else { full };
    (rank..n).map(|k| q.column(k).iter().copied().collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn constraints_hold(problem in feasible_problem()) {
        let sol = solve_placement_weights(&problem).unwrap();
        prop_assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(placement_of(&sol.weights, problem.positions()).amax() < 1e-10);
    }

    #[test]
    fn no_feasible_perturbation_lowers_the_objective(
        problem in feasible_problem(),
        coeffs in prop::collection::vec(-0.5..0.5f64, 8),
    ) {
        let sol = solve_placement_weights(&problem).unwrap();
        let base = problem.objective(&sol.weights);
        for (k, dir) in constraint_null_space(problem.positions()).iter().enumerate() {
            for scale in [coeffs[k % 8], 1e-3] {
                let w: Vec<f64> = sol.weights.iter().zip(dir).map(|(w, d)| w + scale * d).collect();
                prop_assert!(problem.objective(&w) >= base - 1e-12);
            }
        }
    }

    #[test]
    fn target_shift_matches_recentering(problem in feasible_problem(), mix in prop::collection::vec(0.0..1.0f64, 8)) {
        // A new target inside the hull gives a solution that places the VIMU there.
        let total: f64 = mix.iter().take(problem.len()).sum::<f64>().max(1e-9);
        let target: Vec3 = problem.positions().iter().zip(&mix).map(|(r, m)| r * (m / total)).sum();
        let moved = problem.recentered(&target);
        let sol = solve_placement_weights(&moved).unwrap();
        let placed = placement_of(&sol.weights, problem.positions());
        prop_assert!((placed - target).amax() < 1e-9);
    }

    #[test]
    fn inside_hull_gives_non_negative_weights_for_at_most_four(
        n in 2usize..=4,
        pts in prop::collection::vec(vec3(), 4),
        bary in prop::collection::vec(0.01..1.0f64, 4),
        sigmas in prop::collection::vec(0.3..3.0f64, 4),
    ) {
        // Weights are unique for ≤ 4 affinely independent IMUs, so a target
        // inside the hull is reached with its barycentric coordinates.
        let total: f64 = bary[..n].iter().sum();
        let target: Vec3 = pts[..n].iter().zip(&bary).map(|(r, b)| r * (b / total)).sum();
        let positions: Vec<Vec3> = pts[..n].iter().map(|r| r - target).collect();
        let spread = DMatrix::from_fn(3, n - 1, |i, j| positions[j + 1][i] - positions[0][i]);
        prop_assume!(spread.svd(false, false).singular_values.min() > 1e-2);
        let sol = solve_placement_weights(&WeightProblem::new(positions, sigmas[..n].to_vec()).unwrap()).unwrap();
        for (w, b) in sol.weights.iter().zip(&bary) {
            prop_assert!(*w >= -1e-9);
            prop_assert!((w - b / total).abs() < 1e-7);
        }
    }

    #[test]
    fn outside_the_span_is_infeasible(a in vec3(), b in vec3(), off in 0.1..2.0f64) {
        // Two IMUs span a line; a target off that line cannot be reached.
        prop_assume!((a - b).norm() > 0.1);
        let dir = (b - a).normalize();
        let normal = dir.cross(&Vec3::new(0.3, -0.5, 0.8)).normalize();
        prop_assume!(normal.iter().all(|x| x.is_finite()));
        let positions = vec![normal * off + dir * a.dot(&dir), normal * off + dir * b.dot(&dir)];
        match solve_placement_weights(&WeightProblem::equal_noise(positions, 1.0).unwrap()) {
            Err(WeightError::Infeasible { nearest_residual }) => prop_assert!((nearest_residual.norm() - off).abs() < 1e-9),
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn noise_only_is_inverse_variance(sigmas in prop::collection::vec(0.1..5.0f64, 1..8)) {
        let sol = solve_noise_only_weights(&sigmas, None).unwrap();
        let inv: f64 = sigmas.iter().map(|s| 1.0 / (s * s)).sum();
        for (w, s) in sol.weights.iter().zip(&sigmas) {
            prop_assert!((w - 1.0 / (s * s) / inv).abs() < 1e-12);
        }
        prop_assert!((sol.fused_sigma.powi(2) - 1.0 / inv).abs() < 1e-12);
        prop_assert!(!WeightDiagnostics::of(&sol.weights).has_negative());
    }
}

#[test]
fn more_than_four_imus_can_need_negative_weights_inside_the_hull() {
    // Square pyramid; the target sits inside it, yet the minimum-noise
    // weights are not a convex combination.
    let apexes = [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(-1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, -1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let target = Vec3::new(0.6, 0.0, 0.05);
    let p = WeightProblem::equal_noise(apexes.to_vec(), 1.0).unwrap().recentered(&target);
    let sol = solve_placement_weights(&p).unwrap();
    let expected = [0.5375, -0.0625, 0.2375, 0.2375, 0.05];
    for (w, e) in sol.weights.iter().zip(expected) {
        assert!((w - e).abs() < 1e-12, "{:?}", sol.weights);
    }
    assert!(WeightDiagnostics::of(&sol.weights).has_negative());
}
