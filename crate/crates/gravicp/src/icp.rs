//! The outer ICP iteration: transform by the prior, match, solve, apply,
//! repeat until the increment falls below the convergence thresholds.
//!
//! In 4-DOF mode the accumulated correction is maintained as a yaw angle
//! plus translation, so the roll and pitch of the result are those of the
//! prior by construction — gravity enters the registration solely through
//! the prior attitude.

use nalgebra::Vector3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Tau4};
use crate::matching::{build_index, match_scan, MatchParams};
use crate::minimizer::{
    assemble_4dof, residual_error, residual_error_6dof, solve_4dof, solve_6dof,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcpMode {
    FourDof,
    SixDof,
}

#[derive(Debug, Clone, Copy)]
pub struct IcpConfig {
    pub mode: IcpMode,
    pub max_iterations: usize,
    /// Convergence threshold on the increment translation norm, meters.
    pub trans_epsilon: f64,
    /// Convergence threshold on the increment rotation angle, radians.
    pub rot_epsilon: f64,
    pub match_params: MatchParams,
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        if !(self.trans_epsilon > 0.0) || !(self.rot_epsilon > 0.0) {
            return Err(Error::param("convergence epsilons must be positive"));
        }
        Ok(())
    }
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            mode: IcpMode::FourDof,
            max_iterations: 40,
            trans_epsilon: 1e-3,
            rot_epsilon: 1e-4,
            match_params: MatchParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IcpResult {
    /// The prior composed with all per-iteration increments, each
    /// exponentiated exactly.
    pub transform: RigidTransform,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squared projected residuals at the last solved increment.
    pub final_residual: f64,
    pub pair_count: usize,
}

/// Accumulated 4-DOF correction. Composing yaw-plus-translation transforms
/// stays inside that family, which is what pins roll and pitch.
#[derive(Debug, Clone, Copy)]
struct YawCorrection {
    gamma: f64,
    t: Vector3<f64>,
}

impl YawCorrection {
    fn identity() -> Self {
        YawCorrection { gamma: 0.0, t: Vector3::zeros() }
    }

    /// increment ∘ self
    fn prepend(&self, inc: &Tau4) -> Self {
        let rot = RigidTransform::from_yaw(inc.gamma);
        YawCorrection {
            gamma: self.gamma + inc.gamma,
            t: rot.apply_vector(self.t) + inc.t,
        }
    }

    fn as_transform(&self) -> RigidTransform {
        RigidTransform::from_tau(&Tau4::new(self.gamma, self.t))
    }
}

/// Registers `scan` against `map`, starting from `prior`. The scan is given
/// in its own (sensor) frame; the returned transform maps it into the map
/// frame. Non-convergence within `max_iterations` is reported through
/// `converged = false`, not as an error.
pub fn register(
    scan: &PointCloud,
    map: &PointCloud,
    prior: &RigidTransform,
    config: &IcpConfig,
) -> Result<IcpResult> {
    config.validate()?;
    if scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    if !map.has_normals() {
        return Err(Error::MissingNormals);
    }
    let index = build_index(map)?;

    let mut working = scan.transformed(prior);
    let mut correction_4dof = YawCorrection::identity();
    let mut correction_6dof = RigidTransform::identity();
    let mut iterations = 0;
    let mut converged = false;
    let mut final_residual = 0.0;
    let mut pair_count = 0;

    for _ in 0..config.max_iterations {
        iterations += 1;
        let corr = match_scan(&working, &index, map, &config.match_params)?;
        pair_count = corr.kept_count();

        let (increment, step_trans, step_rot) = match config.mode {
            IcpMode::FourDof => {
                let tau = solve_4dof(&assemble_4dof(&corr)?)?;
                final_residual = residual_error(&corr, &tau);
                correction_4dof = correction_4dof.prepend(&tau);
                (
                    RigidTransform::from_tau(&tau),
                    tau.t.norm(),
                    tau.gamma.abs(),
                )
            }
            IcpMode::SixDof => {
                let tau = solve_6dof(&corr)?;
                final_residual = residual_error_6dof(&corr, &tau);
                let inc = RigidTransform::from_rotation_vector(tau.rotation, tau.translation);
                correction_6dof = inc.compose(&correction_6dof);
                (inc, tau.translation.norm(), tau.rotation.norm())
            }
        };

        working = working.transformed(&increment);
        if step_trans < config.trans_epsilon && step_rot < config.rot_epsilon {
            converged = true;
            break;
        }
    }

    let correction = match config.mode {
        IcpMode::FourDof => correction_4dof.as_transform(),
        IcpMode::SixDof => correction_6dof,
    };
    Ok(IcpResult {
        transform: correction.compose(prior),
        iterations,
        converged,
        final_residual,
        pair_count,
    })
}
