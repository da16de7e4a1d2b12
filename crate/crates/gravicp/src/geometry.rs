//! Geometric primitives: points, unit vectors, rigid transforms and the
//! 4-DOF increment solved by the minimizer.
//!
//! Conventions fixed for the whole library:
//! - the world frame has z as the gravity-aligned "up" axis;
//! - yaw is the rotation about world z, applied after roll (x) and pitch (y);
//! - rotations are stored as unit quaternions and converted to matrices at
//!   use sites, so long compositions do not drift away from SO(3).

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// A 3D point in meters. All components are finite by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    /// Panics if any component is NaN or infinite; non-finite coordinates
    /// are a programming error, never data.
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        assert!(
            x.is_finite() && y.is_finite() && z.is_finite(),
            "non-finite point ({x}, {y}, {z})"
        );
        Point3 { x, y, z }
    }

    pub fn origin() -> Self {
        Point3 { x: 0.0, y: 0.0, z: 0.0 }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Point3::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.vector() - other.vector()).norm()
    }
}

/// A direction with unit Euclidean norm (within 1e-9 by construction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3 {
    v: Vector3<f64>,
}

impl UnitVector3 {
    /// Normalizes the given components. Errors if the vector is zero or
    /// non-finite and cannot be normalized.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
            return Err(Error::param("non-finite direction"));
        }
        let norm = v.norm();
        if norm < 1e-12 {
            return Err(Error::param("zero-length direction"));
        }
        Ok(UnitVector3 { v: v / norm })
    }

    pub fn x(&self) -> f64 {
        self.v.x
    }

    pub fn y(&self) -> f64 {
        self.v.y
    }

    pub fn z(&self) -> f64 {
        self.v.z
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.v
    }

    pub fn flipped(&self) -> Self {
        UnitVector3 { v: -self.v }
    }
}

/// The 4-vector increment (gamma, tx, ty, tz) solved per ICP iteration:
/// a yaw angle in radians plus a translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau4 {
    pub gamma: f64,
    pub t: Vector3<f64>,
}

impl Tau4 {
    pub fn new(gamma: f64, t: Vector3<f64>) -> Self {
        assert!(
            gamma.is_finite() && t.x.is_finite() && t.y.is_finite() && t.z.is_finite(),
            "non-finite increment"
        );
        Tau4 { gamma, t }
    }

    pub fn zero() -> Self {
        Tau4 { gamma: 0.0, t: Vector3::zeros() }
    }
}

/// A rotation about the world z axis only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawRotation {
    pub gamma: f64,
}

impl YawRotation {
    pub fn new(gamma: f64) -> Self {
        assert!(gamma.is_finite(), "non-finite yaw");
        YawRotation { gamma }
    }

    /// The third row and column are (0, 0, 1) exactly, not within epsilon.
    pub fn as_matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.gamma.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }
}

/// An SE(3) pose: unit quaternion rotation plus translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform { rotation, translation }
    }

    /// Builds a pose from raw quaternion coefficients, e.g. parsed from a
    /// trajectory file. The quaternion norm must be within `tol` of 1; it is
    /// renormalized on load.
    pub fn from_quaternion_coeffs(
        qw: f64,
        qx: f64,
        qy: f64,
        qz: f64,
        translation: Vector3<f64>,
        tol: f64,
    ) -> Result<Self> {
        let q = nalgebra::Quaternion::new(qw, qx, qy, qz);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > tol {
            return Err(Error::param(format!(
                "quaternion norm {norm} outside unit tolerance {tol}"
            )));
        }
        Ok(RigidTransform {
            rotation: UnitQuaternion::from_quaternion(q),
            translation,
        })
    }

    pub fn from_yaw(gamma: f64) -> Self {
        RigidTransform {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), gamma),
            translation: Vector3::zeros(),
        }
    }

    /// roll about x, then pitch about y, then yaw about z (world frame).
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: UnitQuaternion::from_euler_angles(roll, pitch, yaw),
            translation,
        }
    }

    /// Exact exponentiation of a solved increment: the rotation is the true
    /// yaw rotation by gamma, not its small-angle linearization.
    pub fn from_tau(tau: &Tau4) -> Self {
        RigidTransform {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), tau.gamma),
            translation: tau.t,
        }
    }

    /// Exponential of an axis-angle rotation vector plus translation.
    pub fn from_rotation_vector(r: Vector3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: UnitQuaternion::from_scaled_axis(r),
            translation,
        }
    }

    /// Recovers the pose from an orthonormal rotation matrix and translation.
    pub fn from_matrix_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(rotation);
        RigidTransform {
            rotation: UnitQuaternion::from_rotation_matrix(&rot),
            translation,
        }
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        Point3::from_vector(self.rotation * p.vector() + self.translation)
    }

    /// Rotates a direction; translation does not act on vectors.
    pub fn apply_vector(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn apply_normal(&self, n: &UnitVector3) -> UnitVector3 {
        UnitVector3 { v: self.rotation * n.vector() }
    }

    /// `self ∘ other`: `other` acts first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv_rot = self.rotation.inverse();
        RigidTransform {
            rotation: inv_rot,
            translation: -(inv_rot * self.translation),
        }
    }

    /// (roll, pitch, yaw) such that the rotation equals Rz(yaw)·Ry(pitch)·Rx(roll).
    pub fn euler_angles(&self) -> (f64, f64, f64) {
        self.rotation.euler_angles()
    }

    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation.norm()
    }
}
