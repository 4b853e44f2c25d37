//! Forward kinematics, position Jacobians and static gravity torques.

use std::collections::BTreeMap;

use nalgebra::{Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::RobotModel;
use crate::transform::RigidTransform;

/// Default gravity, z up (m/s²).
pub const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("joint `{joint}` value {value} outside limits [{lower}, {upper}]")]
    JointLimitViolation {
        joint: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Joint angles for every actuated joint plus the gripper flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    /// Radians, one per actuated joint in model order.
    pub q: Vec<f64>,
    #[serde(default)]
    pub gripper_closed: bool,
    /// Seconds, monotonic.
    #[serde(default)]
    pub timestamp: f64,
}

impl JointState {
    pub fn new(q: Vec<f64>) -> Self {
        Self {
            q,
            gripper_closed: false,
            timestamp: 0.0,
        }
    }

    /// Every joint at zero, clamped into its limits.
    pub fn home(model: &RobotModel) -> Self {
        Self::new(
            (0..model.dof())
                .map(|s| model.actuated_joint(s).limits.clamp(0.0))
                .collect(),
        )
    }

    pub fn mid_range(model: &RobotModel) -> Self {
        Self::new(
            (0..model.dof())
                .map(|s| model.actuated_joint(s).limits.mid())
                .collect(),
        )
    }
}

pub fn check_limits(model: &RobotModel, q: &[f64]) -> Result<(), KinematicsError> {
    if q.len() != model.dof() {
        return Err(KinematicsError::DimensionMismatch {
            expected: model.dof(),
            got: q.len(),
        });
    }
    for (slot, &value) in q.iter().enumerate() {
        let joint = model.actuated_joint(slot);
        // NaN fails `contains` as well.
        if !joint.limits.contains(value) {
            return Err(KinematicsError::JointLimitViolation {
                joint: joint.name.clone(),
                value,
                lower: joint.limits.lower,
                upper: joint.limits.upper,
            });
        }
    }
    Ok(())
}

/// World poses of every link and of every joint frame (parent ∘ origin,
/// before the joint rotation), in model order.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    pub links: Vec<RigidTransform>,
    pub joints: Vec<RigidTransform>,
}

impl ChainFrames {
    /// Joint axis and a point on it, in world coordinates.
    pub fn joint_axis(&self, model: &RobotModel, joint: usize) -> (Vector3<f64>, Vector3<f64>) {
        let frame = &self.joints[joint];
        let axis = model.joints()[joint].axis;
        let norm = axis.norm();
        let unit = if norm > 0.0 { axis / norm } else { axis };
        (frame.transform_vector(&unit), frame.translation)
    }

    pub fn end_effector(&self, model: &RobotModel) -> &RigidTransform {
        &self.links[model.end_effector_index()]
    }
}

/// Frames without a limit check; `q` must have one entry per actuated joint.
pub fn chain_frames(model: &RobotModel, q: &[f64]) -> ChainFrames {
    debug_assert_eq!(q.len(), model.dof());
    let mut links = vec![RigidTransform::identity(); model.links().len()];
    let mut joints = Vec::with_capacity(model.joints().len());
    for (j, joint) in model.joints().iter().enumerate() {
        let frame = links[model.joint_parent_index(j)].compose(&joint.origin);
        let pose = match model.joint_slot(j) {
            Some(slot) => frame.compose(&RigidTransform::from_axis_angle(&joint.axis, q[slot])),
            None => frame,
        };
        links[model.joint_child_index(j)] = pose;
        joints.push(frame);
    }
    ChainFrames { links, joints }
}

pub fn end_effector_position(model: &RobotModel, q: &[f64]) -> Vector3<f64> {
    chain_frames(model, q).end_effector(model).translation
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkResult {
    pub link_poses: BTreeMap<String, RigidTransform>,
    pub end_effector: RigidTransform,
}

pub fn forward_kinematics(
    model: &RobotModel,
    state: &JointState,
) -> Result<FkResult, KinematicsError> {
    check_limits(model, &state.q)?;
    let frames = chain_frames(model, &state.q);
    let link_poses = model
        .links()
        .iter()
        .zip(&frames.links)
        .map(|(l, p)| (l.name.clone(), *p))
        .collect();
    Ok(FkResult {
        link_poses,
        end_effector: *frames.end_effector(model),
    })
}

/// Position Jacobian of the end effector, `3 × dof` (m/rad).
pub fn position_jacobian(
    model: &RobotModel,
    state: &JointState,
) -> Result<Matrix3xX<f64>, KinematicsError> {
    check_limits(model, &state.q)?;
    let frames = chain_frames(model, &state.q);
    Ok(jacobian_from_frames(
        model,
        &frames,
        &(0..model.dof()).collect::<Vec<_>>(),
    ))
}

/// Jacobian columns for the given actuated slots only.
pub fn jacobian_from_frames(
    model: &RobotModel,
    frames: &ChainFrames,
    slots: &[usize],
) -> Matrix3xX<f64> {
    let ee_link = model.end_effector_index();
    let p_ee = frames.links[ee_link].translation;
    let mut jac = Matrix3xX::zeros(slots.len());
    for (col, &slot) in slots.iter().enumerate() {
        let j = model.actuated_joints()[slot];
        if !model.joint_moves_link(j, ee_link) {
            continue;
        }
        let (axis, origin) = frames.joint_axis(model, j);
        jac.set_column(col, &axis.cross(&(p_ee - origin)));
    }
    jac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueReport {
    /// N·m about each actuated joint's +axis (right-hand rule).
    pub per_joint: Vec<f64>,
    pub gravity: [f64; 3],
}

/// Static torque `τ = r × F` each actuated joint must hold against gravity,
/// summed over every link it supports and resolved about its axis.
pub fn gravity_torques(
    model: &RobotModel,
    state: &JointState,
    gravity: [f64; 3],
) -> Result<TorqueReport, KinematicsError> {
    check_limits(model, &state.q)?;
    let frames = chain_frames(model, &state.q);
    let g = Vector3::from(gravity);
    let per_joint = model
        .actuated_joints()
        .iter()
        .map(|&j| {
            let (axis, origin) = frames.joint_axis(model, j);
            model
                .distal_links(j)
                .iter()
                .map(|&l| {
                    let link = &model.links()[l];
                    let com = frames.links[l].transform_point(&link.com);
                    let force = g * link.mass;
                    axis.dot(&(com - origin).cross(&force))
                })
                .sum()
        })
        .collect();
    Ok(TorqueReport { per_joint, gravity })
}
