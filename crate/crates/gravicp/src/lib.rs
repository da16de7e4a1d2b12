//! Gravity-constrained point-cloud registration and mapping.
//!
//! The registration core solves the point-to-plane alignment in 4 degrees of
//! freedom — yaw and translation — holding roll and pitch at the values given
//! by a gravity-informed prior (typically an IMU attitude). A classical 6-DOF
//! minimizer is included as the baseline. On top of the core sit an
//! incremental scan-to-map front-end, trajectory-error evaluation, file I/O,
//! and a synthetic benchmark that demonstrates the vertical-drift suppression
//! the 4-DOF parameterization buys.

pub mod bench;
pub mod cloud;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod icp;
pub mod io;
pub mod kdtree;
pub mod mapper;
pub mod matching;
pub mod minimizer;
pub mod preprocess;
pub mod scenario;
pub mod synth;
pub mod trajectory;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use geometry::{Point3, RigidTransform, Tau4, UnitVector3, YawRotation};
pub use icp::{register, IcpConfig, IcpMode, IcpResult};
pub use trajectory::{Trajectory, TrajectoryEntry};
