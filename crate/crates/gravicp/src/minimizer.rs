//! One linearized point-to-plane alignment step.
//!
//! The 4-DOF variant solves for a yaw angle and a 3D translation, leaving
//! roll and pitch untouched; the classical 6-DOF variant solves the full
//! small-angle rigid alignment and serves as the baseline.
//!
//! Per pair k the normal equations row is g = [c_k, n_kᵀ] with
//! c_k = (Γ·p_k)·n_k and right-hand side (q_k − p_k)·n_k. The production
//! assembly stacks the rows into a dense 4×K matrix G and computes
//! A = G·Gᵀ, b = G·h; the per-pair summation of the same system is kept as
//! an independent cross-check and both must agree.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix4, Matrix6, Vector3, Vector4, Vector6};

use crate::error::{Error, Result};
use crate::geometry::Tau4;
use crate::matching::{Correspondence, CorrespondenceSet};

/// Cholesky pivots whose ratio to the largest pivot falls below this mark a
/// rank-deficient system (e.g. a single plane) that would otherwise produce
/// a huge garbage increment instead of failing the factorization outright.
const PIVOT_RATIO_FLOOR: f64 = 1e-8;

/// The normal equations A·τ = b of one 4-DOF step.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem4 {
    matrix: Matrix4<f64>,
    rhs: Vector4<f64>,
}

impl LinearSystem4 {
    pub fn new(matrix: Matrix4<f64>, rhs: Vector4<f64>) -> Self {
        LinearSystem4 { matrix, rhs }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &Vector4<f64> {
        &self.rhs
    }
}

/// The 6-DOF increment: small-angle rotation vector (rx, ry, rz) plus
/// translation, mirroring the 4-DOF τ with both tilt axes restored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau6 {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

/// Per-pair intermediates of the linearized objective.
#[derive(Debug, Clone, Copy)]
pub struct PairTerms {
    /// (Γ·p)·n, which expands to p.x·n.y − p.y·n.x.
    pub c: f64,
    /// q − p.
    pub d: Vector3<f64>,
}

pub fn pair_terms(pair: &Correspondence) -> PairTerms {
    let p = pair.scan_point;
    let n = pair.normal;
    PairTerms {
        c: p.x * n.y() - p.y * n.x(),
        d: pair.map_point.vector() - p.vector(),
    }
}

/// Dense assembly A = G·Gᵀ, b = G·h. This is the production path.
pub fn assemble_4dof(corr: &CorrespondenceSet) -> Result<LinearSystem4> {
    if corr.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let k = corr.kept_count();
    let mut g = DMatrix::<f64>::zeros(4, k);
    let mut h = DVector::<f64>::zeros(k);
    for (col, pair) in corr.pairs().iter().enumerate() {
        let terms = pair_terms(pair);
        let n = pair.normal;
        g[(0, col)] = terms.c;
        g[(1, col)] = n.x();
        g[(2, col)] = n.y();
        g[(3, col)] = n.z();
        h[col] = terms.d.dot(&n.vector());
    }
    let a = &g * g.transpose();
    let b = &g * h;
    Ok(LinearSystem4 {
        matrix: Matrix4::from_fn(|i, j| a[(i, j)]),
        rhs: Vector4::from_fn(|i, _| b[i]),
    })
}

/// Per-pair summation A = Σ [c;n][c,nᵀ], b = Σ [c;n](d·n). Algebraically the
/// same system as [`assemble_4dof`]; retained as an independent cross-check.
pub fn assemble_4dof_summation(corr: &CorrespondenceSet) -> Result<LinearSystem4> {
    if corr.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let mut a = Matrix4::<f64>::zeros();
    let mut b = Vector4::<f64>::zeros();
    for pair in corr.pairs() {
        let terms = pair_terms(pair);
        let n = pair.normal;
        let g = Vector4::new(terms.c, n.x(), n.y(), n.z());
        a += g * g.transpose();
        b += g * terms.d.dot(&n.vector());
    }
    Ok(LinearSystem4 { matrix: a, rhs: b })
}

/// Solves A·τ = b by Cholesky decomposition. Fails with
/// [`Error::DegenerateGeometry`] when the factorization does not exist or is
/// numerically rank-deficient, signalling an under-constrained scene.
pub fn solve_4dof(sys: &LinearSystem4) -> Result<Tau4> {
    let chol = Cholesky::new(sys.matrix).ok_or(Error::DegenerateGeometry)?;
    check_pivots(chol.l_dirty().diagonal().as_slice())?;
    let x = chol.solve(&sys.rhs);
    Ok(Tau4::new(x[0], Vector3::new(x[1], x[2], x[3])))
}

/// Classical small-angle point-to-plane least squares with per-pair row
/// [p×n; n]; the 6×6 analog of the 4-DOF system.
pub fn solve_6dof(corr: &CorrespondenceSet) -> Result<Tau6> {
    if corr.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let mut a = Matrix6::<f64>::zeros();
    let mut b = Vector6::<f64>::zeros();
    for pair in corr.pairs() {
        let n = pair.normal.vector();
        let p = pair.scan_point.vector();
        let d = pair.map_point.vector() - p;
        let lever = p.cross(&n);
        let g = Vector6::new(lever.x, lever.y, lever.z, n.x, n.y, n.z);
        a += g * g.transpose();
        b += g * d.dot(&n);
    }
    let chol = Cholesky::new(a).ok_or(Error::DegenerateGeometry)?;
    check_pivots(chol.l_dirty().diagonal().as_slice())?;
    let x = chol.solve(&b);
    Ok(Tau6 {
        rotation: Vector3::new(x[0], x[1], x[2]),
        translation: Vector3::new(x[3], x[4], x[5]),
    })
}

fn check_pivots(diag: &[f64]) -> Result<()> {
    let mut min_p = f64::INFINITY;
    let mut max_p = 0.0f64;
    for &d in diag {
        if !d.is_finite() || d <= 0.0 {
            return Err(Error::DegenerateGeometry);
        }
        min_p = min_p.min(d);
        max_p = max_p.max(d);
    }
    if min_p <= PIVOT_RATIO_FLOOR * max_p {
        return Err(Error::DegenerateGeometry);
    }
    Ok(())
}

/// Sum of squared linearized point-to-plane residuals
/// Σ (γ·c_k + t·n_k − d_k·n_k)². At τ = 0 this is Σ (d_k·n_k)².
pub fn residual_error(corr: &CorrespondenceSet, tau: &Tau4) -> f64 {
    corr.pairs()
        .iter()
        .map(|pair| {
            let terms = pair_terms(pair);
            let n = pair.normal.vector();
            let r = tau.gamma * terms.c + tau.t.dot(&n) - terms.d.dot(&n);
            r * r
        })
        .sum()
}

/// 6-DOF analog of [`residual_error`]: Σ (r·(p×n) + t·n − d·n)².
pub fn residual_error_6dof(corr: &CorrespondenceSet, tau: &Tau6) -> f64 {
    corr.pairs()
        .iter()
        .map(|pair| {
            let n = pair.normal.vector();
            let p = pair.scan_point.vector();
            let d = pair.map_point.vector() - p;
            let r = tau.rotation.dot(&p.cross(&n)) + tau.translation.dot(&n) - d.dot(&n);
            r * r
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use crate::geometry::{Point3, RigidTransform, UnitVector3};
    use crate::matching::{build_index, match_scan, MatchParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn pair(p: Point3, q: Point3, n: UnitVector3) -> Correspondence {
        Correspondence {
            scan_point: p,
            map_point: q,
            normal: n,
            distance: p.distance(&q),
        }
    }

    fn set_of(pairs: Vec<Correspondence>) -> CorrespondenceSet {
        CorrespondenceSet::from_pairs(pairs)
    }

    fn random_pairs(k: usize, seed: u64) -> CorrespondenceSet {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut pairs = Vec::with_capacity(k);
        for _ in 0..k {
            let p = Point3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            let q = Point3::new(
                p.x + rng.random_range(-0.5..0.5),
                p.y + rng.random_range(-0.5..0.5),
                p.z + rng.random_range(-0.5..0.5),
            );
            let n = UnitVector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .unwrap_or_else(|_| UnitVector3::new(0.0, 0.0, 1.0).unwrap());
            pairs.push(pair(p, q, n));
        }
        set_of(pairs)
    }

    /// Points on the planes x=0, y=0, z=0 with their analytic normals.
    fn three_plane_points(seed: u64, extent: f64) -> Vec<(Point3, UnitVector3)> {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..300 {
            let a = rng.random_range(0.2..extent);
            let b = rng.random_range(0.2..extent);
            let (q, n) = match i % 3 {
                0 => (Point3::new(a, b, 0.0), UnitVector3::new(0.0, 0.0, 1.0)),
                1 => (Point3::new(0.0, a, b), UnitVector3::new(1.0, 0.0, 0.0)),
                _ => (Point3::new(a, 0.0, b), UnitVector3::new(0.0, 1.0, 0.0)),
            };
            out.push((q, n.unwrap()));
        }
        out
    }

    fn max_rel_diff(a: &LinearSystem4, b: &LinearSystem4) -> f64 {
        let scale_a = a.matrix().norm().max(1e-300);
        let scale_b = a.rhs().norm().max(1e-300);
        let da = (a.matrix() - b.matrix()).norm() / scale_a;
        let db = (a.rhs() - b.rhs()).norm() / scale_b;
        da.max(db)
    }

    #[test]
    fn coincident_pair_with_z_normal() {
        let n = UnitVector3::new(0.0, 0.0, 1.0).unwrap();
        let p = Point3::new(1.0, 0.0, 0.0);
        let corr = set_of(vec![pair(p, p, n)]);
        let sys = assemble_4dof(&corr).unwrap();
        let mut expected = Matrix4::zeros();
        expected[(3, 3)] = 1.0;
        assert_relative_eq!(*sys.matrix(), expected, epsilon = 1e-15);
        assert_relative_eq!(*sys.rhs(), Vector4::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn pure_z_offset_feeds_the_rhs() {
        let n = UnitVector3::new(0.0, 0.0, 1.0).unwrap();
        let p = Point3::new(1.0, 0.0, 0.0);
        let q = Point3::new(1.0, 0.0, 0.5);
        let corr = set_of(vec![pair(p, q, n)]);
        let sys = assemble_4dof(&corr).unwrap();
        assert_relative_eq!(
            *sys.rhs(),
            Vector4::new(0.0, 0.0, 0.0, 0.5),
            epsilon = 1e-15
        );
        let mut expected = Matrix4::zeros();
        expected[(3, 3)] = 1.0;
        assert_relative_eq!(*sys.matrix(), expected, epsilon = 1e-15);
    }

    #[test]
    fn pair_terms_match_generator_matrix_expansion() {
        let gamma_gen =
            nalgebra::Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let p = Point3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let n = UnitVector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .unwrap();
            let c = pair_terms(&pair(p, p, n)).c;
            let reference = (gamma_gen * p.vector()).dot(&n.vector());
            assert!((c - reference).abs() < 1e-12);
        }
    }

    #[test]
    fn summation_and_dense_assembly_agree() {
        for (k, seed) in [(1usize, 0u64), (5, 1), (500, 2), (3000, 3)] {
            let corr = random_pairs(k, seed);
            let dense = assemble_4dof(&corr).unwrap();
            let looped = assemble_4dof_summation(&corr).unwrap();
            assert!(
                max_rel_diff(&dense, &looped) < 1e-10,
                "paths disagree at k={k}"
            );
        }
    }

    #[test]
    fn identity_system_solves_directly() {
        let sys = LinearSystem4::new(Matrix4::identity(), Vector4::new(0.1, 1.0, 2.0, 3.0));
        let tau = solve_4dof(&sys).unwrap();
        assert_eq!(tau.gamma, 0.1);
        assert_eq!(tau.t, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn known_offset_recovered_in_one_step() {
        let truth = RigidTransform::from_tau(&Tau4::new(0.02, Vector3::new(0.1, -0.05, 0.2)));
        let inv = truth.inverse();
        let pairs: Vec<Correspondence> = three_plane_points(21, 4.0)
            .into_iter()
            .map(|(q, n)| pair(inv.apply_point(&q), q, n))
            .collect();
        let corr = set_of(pairs);
        let sys = assemble_4dof(&corr).unwrap();
        let tau = solve_4dof(&sys).unwrap();
        assert!((tau.gamma - 0.02).abs() < 1e-3);
        assert!((tau.t - Vector3::new(0.1, -0.05, 0.2)).norm() < 1e-3);
    }

    #[test]
    fn single_plane_is_degenerate() {
        let n = UnitVector3::new(0.0, 0.0, 1.0).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        let pairs: Vec<Correspondence> = (0..200)
            .map(|_| {
                let q = Point3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    0.0,
                );
                pair(q, q, n)
            })
            .collect();
        let corr = set_of(pairs);
        let sys = assemble_4dof(&corr).unwrap();
        assert!(matches!(solve_4dof(&sys), Err(Error::DegenerateGeometry)));
        assert!(matches!(solve_6dof(&corr), Err(Error::DegenerateGeometry)));
    }

    #[test]
    fn six_dof_recovers_known_small_transform() {
        let rot = Vector3::new(0.01, -0.01, 0.02);
        let t = Vector3::new(0.1, -0.05, 0.2);
        let truth = RigidTransform::from_rotation_vector(rot, t);
        let inv = truth.inverse();
        let pairs: Vec<Correspondence> = three_plane_points(33, 3.0)
            .into_iter()
            .map(|(q, n)| pair(inv.apply_point(&q), q, n))
            .collect();
        let tau = solve_6dof(&set_of(pairs)).unwrap();
        assert!(
            (tau.rotation - rot).norm() < 1e-3,
            "rotation error {}",
            (tau.rotation - rot).norm()
        );
        assert!(
            (tau.translation - t).norm() < 1e-3,
            "translation error {}",
            (tau.translation - t).norm()
        );
    }

    #[test]
    fn six_dof_of_coincident_clouds_is_zero() {
        let pairs: Vec<Correspondence> = three_plane_points(40, 4.0)
            .into_iter()
            .map(|(q, n)| pair(q, q, n))
            .collect();
        let tau = solve_6dof(&set_of(pairs)).unwrap();
        assert!(tau.rotation.norm() < 1e-12);
        assert!(tau.translation.norm() < 1e-12);
    }

    #[test]
    fn residual_of_coincident_pairs_is_zero() {
        let n = UnitVector3::new(0.0, 0.0, 1.0).unwrap();
        let p = Point3::new(1.0, 2.0, 3.0);
        let corr = set_of(vec![pair(p, p, n)]);
        assert_eq!(residual_error(&corr, &Tau4::zero()), 0.0);
    }

    #[test]
    fn residual_squares_the_projected_offset() {
        let n = UnitVector3::new(0.0, 0.0, 1.0).unwrap();
        let p = Point3::new(1.0, 0.0, 0.0);
        let q = Point3::new(1.0, 0.0, 0.5);
        let corr = set_of(vec![pair(p, q, n)]);
        assert!((residual_error(&corr, &Tau4::zero()) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn solved_tau_does_not_increase_the_residual() {
        for seed in 0..5u64 {
            let corr = random_pairs(300, seed);
            let sys = assemble_4dof(&corr).unwrap();
            let tau = solve_4dof(&sys).unwrap();
            assert!(residual_error(&corr, &tau) <= residual_error(&corr, &Tau4::zero()) + 1e-12);
        }
    }

    #[test]
    fn normal_equations_hold_at_the_solution() {
        let corr = random_pairs(800, 11);
        let sys = assemble_4dof(&corr).unwrap();
        let tau = solve_4dof(&sys).unwrap();
        let x = Vector4::new(tau.gamma, tau.t.x, tau.t.y, tau.t.z);
        let residual = (sys.matrix() * x - sys.rhs()).norm();
        assert!(residual <= 1e-8 * sys.rhs().norm().max(1.0));
    }

    #[test]
    fn gradient_at_zero_matches_finite_differences() {
        let corr = random_pairs(200, 13);
        let sys = assemble_4dof(&corr).unwrap();
        let analytic = -2.0 * sys.rhs();
        let h = 1e-6;
        for i in 0..4 {
            let mut plus = Vector4::zeros();
            plus[i] = h;
            let tau_p = Tau4::new(plus[0], Vector3::new(plus[1], plus[2], plus[3]));
            let tau_m = Tau4::new(-plus[0], Vector3::new(-plus[1], -plus[2], -plus[3]));
            let fd = (residual_error(&corr, &tau_p) - residual_error(&corr, &tau_m)) / (2.0 * h);
            let denom = analytic[i].abs().max(1.0);
            assert!(
                (fd - analytic[i]).abs() / denom < 1e-6,
                "component {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn solved_yaw_produces_exact_yaw_only_rotation() {
        let corr = random_pairs(50, 15);
        let sys = assemble_4dof(&corr).unwrap();
        let tau = solve_4dof(&sys).unwrap();
        let m = RigidTransform::from_tau(&tau).rotation_matrix();
        assert_eq!(m[(2, 2)], 1.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(1, 2)], 0.0);
        assert_eq!(m[(2, 0)], 0.0);
        assert_eq!(m[(2, 1)], 0.0);
    }

    #[test]
    fn solution_beats_random_perturbations() {
        let corr = random_pairs(400, 19);
        let sys = assemble_4dof(&corr).unwrap();
        let tau = solve_4dof(&sys).unwrap();
        let best = residual_error(&corr, &tau);
        let mut rng = StdRng::seed_from_u64(20);
        for _ in 0..100 {
            let delta = Vector4::new(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
            );
            let perturbed = Tau4::new(
                tau.gamma + delta[0],
                tau.t + Vector3::new(delta[1], delta[2], delta[3]),
            );
            assert!(residual_error(&corr, &perturbed) + 1e-12 >= best);
        }
    }

    #[test]
    fn four_and_six_dof_agree_on_tilt_free_offsets() {
        let truth = RigidTransform::from_tau(&Tau4::new(0.015, Vector3::new(0.08, -0.04, 0.12)));
        let inv = truth.inverse();
        let pairs: Vec<Correspondence> = three_plane_points(55, 4.0)
            .into_iter()
            .map(|(q, n)| pair(inv.apply_point(&q), q, n))
            .collect();
        let corr = set_of(pairs);
        let tau4 = solve_4dof(&assemble_4dof(&corr).unwrap()).unwrap();
        let tau6 = solve_6dof(&corr).unwrap();
        assert!(tau6.rotation.x.abs() < 1e-3);
        assert!(tau6.rotation.y.abs() < 1e-3);
        assert!((tau6.rotation.z - tau4.gamma).abs() < 1e-3);
        assert!((tau6.translation - tau4.t).norm() < 1e-3);
    }

    #[test]
    fn empty_set_is_rejected() {
        let corr = set_of(vec![]);
        assert!(matches!(
            assemble_4dof(&corr),
            Err(Error::NoCorrespondences)
        ));
        assert!(matches!(
            assemble_4dof_summation(&corr),
            Err(Error::NoCorrespondences)
        ));
        assert!(matches!(solve_6dof(&corr), Err(Error::NoCorrespondences)));
    }

    #[test]
    fn matched_scene_round_trips_through_the_solver() {
        // End-to-end through matching: a gently offset copy of a three-plane
        // cloud, matched then solved, reduces the residual.
        let points: Vec<(Point3, UnitVector3)> = three_plane_points(60, 5.0);
        let (pts, normals): (Vec<_>, Vec<_>) = points.into_iter().unzip();
        let map = PointCloud::with_normals(pts, normals, "map").unwrap();
        let offset = RigidTransform::from_tau(&Tau4::new(0.01, Vector3::new(0.05, 0.02, -0.03)));
        let scan = map.transformed(&offset.inverse());
        let index = build_index(&map).unwrap();
        let corr = match_scan(&scan, &index, &map, &MatchParams::new(1.0, 1.0).unwrap()).unwrap();
        let tau = solve_4dof(&assemble_4dof(&corr).unwrap()).unwrap();
        assert!(residual_error(&corr, &tau) < residual_error(&corr, &Tau4::zero()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn assembly_paths_agree_for_random_sizes(
            k in 1usize..2000,
            seed in 0u64..10_000,
        ) {
            let corr = random_pairs(k, seed);
            let dense = assemble_4dof(&corr).unwrap();
            let looped = assemble_4dof_summation(&corr).unwrap();
            prop_assert!(max_rel_diff(&dense, &looped) < 1e-10);
        }

        #[test]
        fn assembled_matrix_is_symmetric_positive_semidefinite(
            k in 1usize..500,
            seed in 0u64..10_000,
        ) {
            let corr = random_pairs(k, seed);
            let sys = assemble_4dof(&corr).unwrap();
            let a = sys.matrix();
            let asym = (a - a.transpose()).norm();
            prop_assert!(asym <= 1e-10 * a.norm().max(1e-300));
            let eigen = nalgebra::SymmetricEigen::new(*a);
            let floor = -1e-9 * a.trace();
            for ev in eigen.eigenvalues.iter() {
                prop_assert!(*ev >= floor);
            }
        }
    }
}
