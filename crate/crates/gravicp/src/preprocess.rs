//! Scan conditioning before registration: seeded random subsampling and
//! PCA surface-normal estimation over k nearest neighbors.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point3, UnitVector3};
use crate::kdtree::KdTree;

/// A neighborhood is degenerate when its second principal axis carries no
/// spread (collinear points); such a patch defines no plane.
const DEGENERACY_RATIO: f64 = 1e-9;

/// A neighborhood whose out-of-plane spread exceeds this fraction of its
/// in-plane spread straddles an edge or corner rather than a surface patch;
/// its normal constrains nothing useful, so the point is flagged like the
/// collinear case. Noisy but genuinely flat patches stay well below this.
const NONPLANAR_RATIO: f64 = 0.25;

#[derive(Debug, Clone, Copy)]
pub struct NormalEstimationParams {
    pub k_neighbors: usize,
    /// Normals are sign-flipped to point toward this position, conventionally
    /// the sensor origin expressed in the cloud frame.
    pub orient_toward: Point3,
}

impl NormalEstimationParams {
    pub fn new(k_neighbors: usize, orient_toward: Point3) -> Result<Self> {
        if k_neighbors < 3 {
            return Err(Error::param(format!(
                "normal estimation needs k >= 3, got {k_neighbors}"
            )));
        }
        Ok(NormalEstimationParams { k_neighbors, orient_toward })
    }
}

impl Default for NormalEstimationParams {
    fn default() -> Self {
        NormalEstimationParams {
            k_neighbors: 10,
            orient_toward: Point3::origin(),
        }
    }
}

/// Keeps round(keep_ratio · N) points, chosen by a seeded pseudo-random
/// permutation. The surviving points keep their relative input order, so a
/// fixed seed always yields the same output. Normals and degeneracy flags
/// subset consistently.
pub fn random_subsample(cloud: &PointCloud, keep_ratio: f64, seed: u64) -> Result<PointCloud> {
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(Error::param(format!(
            "keep_ratio must be in (0, 1], got {keep_ratio}"
        )));
    }
    let n = cloud.len();
    let keep = ((keep_ratio * n as f64).round() as usize).min(n);

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    indices.truncate(keep);
    indices.sort_unstable();

    let points: Vec<Point3> = indices.iter().map(|&i| cloud.points()[i]).collect();
    match cloud.normals() {
        Some(normals) => {
            let sub_normals: Vec<UnitVector3> = indices.iter().map(|&i| normals[i]).collect();
            let flags: Vec<bool> = indices.iter().map(|&i| cloud.is_degenerate(i)).collect();
            let mut out = PointCloud::new(points, cloud.frame_id());
            out.set_normals(sub_normals, flags);
            Ok(out)
        }
        None => Ok(PointCloud::new(points, cloud.frame_id())),
    }
}

/// Estimates one normal per point as the smallest-eigenvalue eigenvector of
/// the covariance of its k nearest neighbors, oriented toward
/// `params.orient_toward`. Collinear neighborhoods are flagged degenerate.
pub fn estimate_normals(cloud: &PointCloud, params: &NormalEstimationParams) -> Result<PointCloud> {
    if cloud.len() < params.k_neighbors {
        return Err(Error::InsufficientPoints {
            have: cloud.len(),
            need: params.k_neighbors,
        });
    }
    let tree = KdTree::build(cloud.points())?;
    let mut normals = Vec::with_capacity(cloud.len());
    let mut degenerate = Vec::with_capacity(cloud.len());
    let mut neighborhood = Vec::with_capacity(params.k_neighbors);
    for p in cloud.points() {
        neighborhood.clear();
        for n in tree.knn(params.k_neighbors, p) {
            neighborhood.push(cloud.points()[n.index].vector());
        }
        let (normal, flag) = normal_from_neighborhood(&neighborhood, p, &params.orient_toward);
        normals.push(normal);
        degenerate.push(flag);
    }
    let mut out = cloud.clone();
    out.set_normals(normals, degenerate);
    Ok(out)
}

/// PCA normal for one neighborhood; returns the unit normal and whether the
/// neighborhood was degenerate.
pub(crate) fn normal_from_neighborhood(
    neighbors: &[Vector3<f64>],
    at: &Point3,
    orient_toward: &Point3,
) -> (UnitVector3, bool) {
    let count = neighbors.len() as f64;
    let centroid: Vector3<f64> = neighbors.iter().sum::<Vector3<f64>>() / count;
    let mut cov = Matrix3::zeros();
    for n in neighbors {
        let d = n - centroid;
        cov += d * d.transpose();
    }

    let eigen = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let [lo, mid, hi] = order;

    let lambda_lo = eigen.eigenvalues[lo].max(0.0);
    let lambda_mid = eigen.eigenvalues[mid].max(0.0);
    let lambda_hi = eigen.eigenvalues[hi].max(0.0);
    let degenerate = lambda_hi <= 0.0
        || lambda_mid <= DEGENERACY_RATIO * lambda_hi
        || lambda_lo > NONPLANAR_RATIO * lambda_mid;

    let axis = eigen.eigenvectors.column(lo).into_owned();
    let mut normal = UnitVector3::from_vector(axis)
        .expect("eigenvector of a symmetric 3x3 matrix has unit norm");
    if normal.vector().dot(&(orient_toward.vector() - at.vector())) < 0.0 {
        normal = normal.flipped();
    }
    (normal, degenerate)
}
