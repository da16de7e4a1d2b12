//! Trajectory accuracy metrics: absolute trajectory error, its z component
//! indexed by distance traveled, distance-normalized error quartiles, and
//! the loop-based pitch calibration correction.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::trajectory::Trajectory;

/// One estimated pose associated with a reference pose of nearby timestamp.
#[derive(Debug, Clone, Copy)]
pub struct PosePair {
    pub stamp: f64,
    pub estimated: RigidTransform,
    pub reference: RigidTransform,
}

#[derive(Debug, Clone, Copy)]
pub struct PoseError {
    pub stamp: f64,
    /// Translational error of reference⁻¹ ∘ estimated, i.e. expressed in the
    /// reference pose frame. Invariant under moving both trajectories by a
    /// common rigid transform.
    pub e_xyz: Vector3<f64>,
    pub e_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone)]
pub struct AteReport {
    pub per_pose: Vec<PoseError>,
    /// (cumulative reference path length, e_z) per associated pose.
    pub z_series: Vec<(f64, f64)>,
    /// Quartiles of 100·e_norm/distance_traveled over poses at least 1 m
    /// into the run, in percent.
    pub quartiles_normalized: Quartiles,
}

impl AteReport {
    pub fn final_abs_z(&self) -> f64 {
        self.z_series.last().map(|(_, ez)| ez.abs()).unwrap_or(0.0)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.z_series
            .iter()
            .map(|(_, ez)| ez.abs())
            .fold(0.0, f64::max)
    }

    pub fn rmse(&self) -> f64 {
        if self.per_pose.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.per_pose.iter().map(|e| e.e_norm * e.e_norm).sum();
        (sum / self.per_pose.len() as f64).sqrt()
    }

    /// Plot-ready delimited text: one `distance e_z e_norm` row per pose.
    pub fn series_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("# distance_m e_z_m e_norm_m\n");
        for ((distance, e_z), pose) in self.z_series.iter().zip(&self.per_pose) {
            let _ = writeln!(out, "{distance:.6} {e_z:.6} {:.6}", pose.e_norm);
        }
        out
    }
}

/// Pairs each estimated pose with the reference pose of nearest stamp within
/// `max_dt` seconds; unmatched poses are dropped.
pub fn associate(
    estimated: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
) -> Result<Vec<PosePair>> {
    if estimated.is_empty() || reference.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let ref_entries = reference.entries();
    let mut pairs = Vec::new();
    for est in estimated.entries() {
        let idx = ref_entries.partition_point(|e| e.stamp < est.stamp);
        let mut best: Option<(f64, usize)> = None;
        for cand in [idx.wrapping_sub(1), idx] {
            if let Some(entry) = ref_entries.get(cand) {
                let dt = (entry.stamp - est.stamp).abs();
                if best.map(|(b, _)| dt < b).unwrap_or(true) {
                    best = Some((dt, cand));
                }
            }
        }
        if let Some((dt, cand)) = best {
            if dt <= max_dt {
                pairs.push(PosePair {
                    stamp: est.stamp,
                    estimated: est.pose,
                    reference: ref_entries[cand].pose,
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoAssociations);
    }
    Ok(pairs)
}

/// Computes per-pose translational errors. With `align` set, a best-fit
/// rigid alignment of the estimated positions onto the reference positions
/// is applied first; the default compares in the shared start frame.
pub fn compute_ate(pairs: &[PosePair], align: bool) -> Result<AteReport> {
    if pairs.is_empty() {
        return Err(Error::NoAssociations);
    }

    let correction = if align {
        let est: Vec<Vector3<f64>> = pairs.iter().map(|p| p.estimated.translation()).collect();
        let reference: Vec<Vector3<f64>> =
            pairs.iter().map(|p| p.reference.translation()).collect();
        fit_rigid_alignment(&est, &reference)
    } else {
        RigidTransform::identity()
    };

    let mut per_pose = Vec::with_capacity(pairs.len());
    let mut z_series = Vec::with_capacity(pairs.len());
    let mut normalized = Vec::new();
    let mut distance = 0.0;
    let mut prev_ref: Option<Vector3<f64>> = None;

    for pair in pairs {
        let est = correction.compose(&pair.estimated);
        let ref_pos = pair.reference.translation();
        if let Some(prev) = prev_ref {
            distance += (ref_pos - prev).norm();
        }
        prev_ref = Some(ref_pos);

        let e_xyz = pair
            .reference
            .rotation()
            .inverse_transform_vector(&(est.translation() - ref_pos));
        let e_norm = e_xyz.norm();
        per_pose.push(PoseError { stamp: pair.stamp, e_xyz, e_norm });
        z_series.push((distance, e_xyz.z));
        if distance >= 1.0 {
            normalized.push(100.0 * e_norm / distance);
        }
    }

    normalized.sort_by(f64::total_cmp);
    let quartiles_normalized = Quartiles {
        q1: quantile(&normalized, 0.25),
        median: quantile(&normalized, 0.5),
        q3: quantile(&normalized, 0.75),
    };
    Ok(AteReport { per_pose, z_series, quartiles_normalized })
}

/// The lidar-frame pitch correction implied by the elevation mismatch after
/// closing a loop: atan(elevation_error / loop_length).
pub fn pitch_correction(loop_length: f64, elevation_error: f64) -> Result<f64> {
    if !(loop_length > 0.0) {
        return Err(Error::param(format!(
            "loop length must be positive, got {loop_length}"
        )));
    }
    Ok((elevation_error / loop_length).atan())
}

/// Best-fit rotation + translation mapping `from` positions onto `to`
/// positions in the least-squares sense.
fn fit_rigid_alignment(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> RigidTransform {
    let n = from.len() as f64;
    let c_from: Vector3<f64> = from.iter().sum::<Vector3<f64>>() / n;
    let c_to: Vector3<f64> = to.iter().sum::<Vector3<f64>>() / n;

    let mut cross = Matrix3::<f64>::zeros();
    for (f, t) in from.iter().zip(to.iter()) {
        cross += (f - c_from) * (t - c_to).transpose();
    }

    let svd = nalgebra::SVD::new(cross, true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return RigidTransform::new(nalgebra::UnitQuaternion::identity(), c_to - c_from);
    };
    let mut rotation = v_t.transpose() * u.transpose();
    if rotation.determinant() < 0.0 {
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        rotation = v_t.transpose() * flip * u.transpose();
    }
    let translation = c_to - rotation * c_from;
    RigidTransform::from_matrix_parts(rotation, translation)
}

/// Linear-interpolation quantile over pre-sorted values; 0 for an empty set.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
