//! Position-only inverse kinematics by iterated damped pseudo-inverse steps.

use nalgebra::{Matrix3, Matrix3xX, MatrixXx3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    chain_frames, check_limits, jacobian_from_frames, JointState, KinematicsError,
};
use crate::model::RobotModel;

/// Condition number of `JJᵀ` above which the undamped inverse is refused.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Error growth over the initial error that classifies a run as diverged.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IkError {
    #[error("invalid IK parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("JJᵀ is numerically singular (condition estimate {0:e})")]
    SingularMatrix(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkParams {
    /// Meters.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub step_scale: f64,
    pub clamp_to_limits: bool,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 200,
            damping: 0.05,
            step_scale: 0.5,
            clamp_to_limits: true,
        }
    }
}

impl IkParams {
    pub fn validate(&self) -> Result<(), IkError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(IkError::InvalidParams(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations < 1 {
            return Err(IkError::InvalidParams(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(IkError::InvalidParams(format!(
                "damping must be non-negative, got {}",
                self.damping
            )));
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return Err(IkError::InvalidParams(format!(
                "step_scale must be in (0, 1], got {}",
                self.step_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IkStatus {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkResult {
    pub q: Vec<f64>,
    pub status: IkStatus,
    /// Error norm (m) before the first step and after every step.
    pub trace: Vec<f64>,
}

impl IkResult {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }

    pub fn final_error(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial error")
    }
}

/// `Jᵀ(JJᵀ + λ²I)⁻¹`.
pub fn damped_pinv(jac: &Matrix3xX<f64>, lambda: f64) -> Result<MatrixXx3<f64>, IkError> {
    let jjt = jac * jac.transpose();
    let damped = jjt + Matrix3::identity() * (lambda * lambda);
    if lambda == 0.0 {
        let eig = jjt.symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        if cond.is_nan() || cond > SINGULAR_CONDITION {
            return Err(IkError::SingularMatrix(cond));
        }
    }
    let inv = damped
        .try_inverse()
        .ok_or(IkError::SingularMatrix(f64::INFINITY))?;
    Ok(jac.transpose() * inv)
}

fn clamp_slots(model: &RobotModel, q: &mut [f64], slots: &[usize]) {
    for &s in slots {
        q[s] = model.actuated_joint(s).limits.clamp(q[s]);
    }
}

/// Drives the end effector to `target` by
/// `q ← clamp(q + α·J⁺(q)·(target − p(q)))`.
///
/// The gripper joint is held fixed. The returned `q` always lies within the
/// joint limits; without `clamp_to_limits` intermediate iterates may leave
/// them and the final iterate is clamped once at the end.
pub fn solve_ik(
    model: &RobotModel,
    q0: &JointState,
    target: Vector3<f64>,
    params: &IkParams,
) -> Result<IkResult, IkError> {
    params.validate()?;
    check_limits(model, &q0.q)?;
    if !target.iter().all(|v| v.is_finite()) {
        return Err(IkError::InvalidParams("target must be finite".into()));
    }
    let slots = model.arm_slots();
    let mut q = q0.q.clone();

    let error_at = |q: &[f64]| {
        let frames = chain_frames(model, q);
        let e = target - frames.end_effector(model).translation;
        (frames, e)
    };

    let (mut frames, mut err) = error_at(&q);
    let initial = err.norm();
    let mut trace = vec![initial];
    let mut status = if initial < params.tolerance {
        IkStatus::Converged
    } else {
        IkStatus::MaxIterations
    };

    if status != IkStatus::Converged {
        for _ in 0..params.max_iterations {
            let jac = jacobian_from_frames(model, &frames, &slots);
            let step = damped_pinv(&jac, params.damping)? * err * params.step_scale;
            for (k, &s) in slots.iter().enumerate() {
                q[s] += step[k];
            }
            if params.clamp_to_limits {
                clamp_slots(model, &mut q, &slots);
            }
            (frames, err) = error_at(&q);
            let norm = err.norm();
            trace.push(norm);
            if norm < params.tolerance {
                status = IkStatus::Converged;
                break;
            }
            if norm > DIVERGENCE_FACTOR * initial {
                status = IkStatus::Diverged;
                break;
            }
        }
    }

    if !params.clamp_to_limits && check_limits(model, &q).is_err() {
        clamp_slots(model, &mut q, &slots);
        let norm = error_at(&q).1.norm();
        *trace.last_mut().expect("non-empty") = norm;
        if status == IkStatus::Converged && norm >= params.tolerance {
            status = IkStatus::MaxIterations;
        }
    }

    Ok(IkResult { q, status, trace })
}
