use serde::{Deserialize, Serialize};

use crate::collision::{check_self_collision, CollisionReport};
use crate::kinematics::{JointState, KinematicsError};
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Approved,
    Rejected,
}

/// A direct-mode motion after the simulate-before-execute check.
///
/// `verdict == Rejected` iff `warning` is present (and non-empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedMotion {
    pub target_q: JointState,
    pub verdict: Verdict,
    pub warning: Option<CollisionReport>,
}

impl StagedMotion {
    pub fn approved(&self) -> bool {
        self.verdict == Verdict::Approved
    }
}

/// Collision-checks `target_q` before it may be executed. Limit violations
/// are errors and never reach the collision check.
pub fn validate_and_stage(
    model: &RobotModel,
    target_q: &JointState,
) -> Result<StagedMotion, KinematicsError> {
    let report = check_self_collision(model, target_q)?;
    Ok(if report.is_clear() {
        StagedMotion {
            target_q: target_q.clone(),
            verdict: Verdict::Approved,
            warning: None,
        }
    } else {
        StagedMotion {
            target_q: target_q.clone(),
            verdict: Verdict::Rejected,
            warning: Some(report),
        }
    })
}
