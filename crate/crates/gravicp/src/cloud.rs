//! Point clouds: ordered point sets with optional per-point unit normals.

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, UnitVector3};

/// An ordered set of 3D points, optionally carrying one unit normal per
/// point. Normal estimation may additionally flag points whose local
/// neighborhood was degenerate (collinear); flagged points are skipped by
/// correspondence search since they carry no plane constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<UnitVector3>>,
    degenerate: Option<Vec<bool>>,
    frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame_id: impl Into<String>) -> Self {
        PointCloud {
            points,
            normals: None,
            degenerate: None,
            frame_id: frame_id.into(),
        }
    }

    pub fn with_normals(
        points: Vec<Point3>,
        normals: Vec<UnitVector3>,
        frame_id: impl Into<String>,
    ) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::param(format!(
                "normal count {} does not match point count {}",
                normals.len(),
                points.len()
            )));
        }
        Ok(PointCloud {
            points,
            normals: Some(normals),
            degenerate: None,
            frame_id: frame_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[UnitVector3]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn is_degenerate(&self, index: usize) -> bool {
        self.degenerate
            .as_ref()
            .map(|flags| flags[index])
            .unwrap_or(false)
    }

    pub(crate) fn set_normals(&mut self, normals: Vec<UnitVector3>, degenerate: Vec<bool>) {
        debug_assert_eq!(normals.len(), self.points.len());
        debug_assert_eq!(degenerate.len(), self.points.len());
        self.normals = Some(normals);
        self.degenerate = Some(degenerate);
    }

    pub(crate) fn append(
        &mut self,
        points: &[Point3],
        normals: &[UnitVector3],
        degenerate: &[bool],
    ) {
        debug_assert!(self.normals.is_some());
        self.points.extend_from_slice(points);
        if let Some(n) = self.normals.as_mut() {
            n.extend_from_slice(normals);
        }
        self.degenerate
            .get_or_insert_with(|| vec![false; self.points.len() - points.len()])
            .extend_from_slice(degenerate);
    }

    /// Maps every point p to R·p + t and every normal n to R·n. Length,
    /// normal presence and degeneracy flags carry over unchanged.
    pub fn transformed(&self, transform: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| transform.apply_point(p))
                .collect(),
            normals: self.normals.as_ref().map(|normals| {
                normals
                    .iter()
                    .map(|n| transform.apply_normal(n))
                    .collect()
            }),
            degenerate: self.degenerate.clone(),
            frame_id: self.frame_id.clone(),
        }
    }
}
