//! Model findings that do not prevent construction but affect usability.

use serde::{Deserialize, Serialize};

use crate::model::{JointKind, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FindingCode {
    NonUnitAxis,
    ZeroRange,
    ZeroMassLink,
    MissingCollisionBox,
    UnknownElement,
    UnsupportedGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub code: FindingCode,
    pub message: String,
    pub location: String,
}

impl Finding {
    pub fn new(code: FindingCode, message: impl Into<String>, location: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            location: location.into(),
        }
    }
}

/// A model is usable iff `errors` is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_usable(&self) -> bool {
        self.errors.is_empty()
    }
}

pub const AXIS_NORM_TOLERANCE: f64 = 1e-9;

pub fn validate_model(model: &RobotModel) -> ValidationReport {
    let mut report = ValidationReport::default();

    for joint in model.joints() {
        if joint.kind != JointKind::Revolute {
            continue;
        }
        let location = format!("joint {}", joint.name);
        let norm = joint.axis.norm();
        if (norm - 1.0).abs() > AXIS_NORM_TOLERANCE {
            report.errors.push(Finding::new(
                FindingCode::NonUnitAxis,
                format!(
                    "axis ({}, {}, {}) has norm {norm}",
                    joint.axis.x, joint.axis.y, joint.axis.z
                ),
                location.clone(),
            ));
        }
        if joint.limits.lower == joint.limits.upper {
            report.warnings.push(Finding::new(
                FindingCode::ZeroRange,
                format!("lower and upper limits are both {}", joint.limits.lower),
                location,
            ));
        }
    }

    let movable: Vec<bool> = (0..model.links().len())
        .map(|l| {
            model
                .actuated_joints()
                .iter()
                .any(|&j| model.joint_moves_link(j, l))
        })
        .collect();

    for (i, link) in model.links().iter().enumerate() {
        let location = format!("link {}", link.name);
        if movable[i] && link.mass == 0.0 {
            report.warnings.push(Finding::new(
                FindingCode::ZeroMassLink,
                "movable link has zero mass",
                location.clone(),
            ));
        }
        if link.collision_box.is_none() {
            report.warnings.push(Finding::new(
                FindingCode::MissingCollisionBox,
                "link has no collision box and is skipped by self-collision checks",
                location,
            ));
        }
    }
    report
}
