//! Request and response bodies for the one-shot operations, shared by the
//! HTTP service, its client and the CLI so local and remote runs agree.

use std::borrow::Cow;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::collision::{check_self_collision, CollisionReport};
use crate::ik::{solve_ik, IkError, IkParams, IkResult};
use crate::kinematics::{
    forward_kinematics, gravity_torques, FkResult, JointState, KinematicsError, TorqueReport,
    DEFAULT_GRAVITY,
};
use crate::model::{ParseError, RobotModel};
use crate::sim::{Ack, CommandMessage, StateMessage};
use crate::urdf::parse_urdf_with_warnings;
use crate::validate::{validate_model, Finding};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<KinematicsError> for ApiError {
    fn from(e: KinematicsError) -> Self {
        let code = match e {
            KinematicsError::JointLimitViolation { .. } => "JointLimitViolation",
            KinematicsError::DimensionMismatch { .. } => "DimensionMismatch",
        };
        Self::new(code, e.to_string())
    }
}

impl From<IkError> for ApiError {
    fn from(e: IkError) -> Self {
        match e {
            IkError::Kinematics(k) => k.into(),
            IkError::InvalidParams(_) => Self::new("InvalidParams", e.to_string()),
            IkError::SingularMatrix(_) => Self::new("SingularMatrix", e.to_string()),
        }
    }
}

/// Uses `urdf` when given, otherwise the fallback model.
pub fn resolve_model<'a>(
    urdf: Option<&str>,
    fallback: &'a RobotModel,
) -> Result<Cow<'a, RobotModel>, ApiError> {
    match urdf {
        Some(text) => Ok(Cow::Owned(parse_urdf_with_warnings(text)?.0)),
        None => Ok(Cow::Borrowed(fallback)),
    }
}

/// Accepts every actuated joint, or every joint but the gripper, which then
/// starts open.
pub fn joint_state(model: &RobotModel, q: &[f64]) -> JointState {
    let arm = model.arm_slots();
    if q.len() == arm.len() && q.len() != model.dof() {
        let mut full = JointState::home(model).q;
        for (&slot, &v) in arm.iter().zip(q) {
            full[slot] = v;
        }
        if let Some(g) = model.gripper_slot() {
            full[g] = model.actuated_joint(g).limits.lower;
        }
        JointState::new(full)
    } else {
        JointState::new(q.to_vec())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urdf: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub code: String,
    pub message: String,
    pub location: String,
}

impl From<Finding> for ReportEntry {
    fn from(f: Finding) -> Self {
        Self {
            code: format!("{:?}", f.code),
            message: f.message,
            location: f.location,
        }
    }
}

/// Parse failures and model findings in one list; usable iff `errors` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub model: Option<String>,
    pub errors: Vec<ReportEntry>,
    pub warnings: Vec<ReportEntry>,
}

impl ValidateResponse {
    pub fn is_usable(&self) -> bool {
        self.errors.is_empty()
    }
}

pub fn validate(req: &ValidateRequest, fallback: &RobotModel) -> ValidateResponse {
    let (model, mut warnings) = match &req.urdf {
        None => (Cow::Borrowed(fallback), Vec::new()),
        Some(text) => match parse_urdf_with_warnings(text) {
            Ok((m, w)) => (Cow::Owned(m), w),
            Err(e) => {
                return ValidateResponse {
                    model: None,
                    errors: vec![ReportEntry {
                        code: e.code().into(),
                        message: e.to_string(),
                        location: "document".into(),
                    }],
                    warnings: Vec::new(),
                }
            }
        },
    };
    let report = validate_model(&model);
    warnings.extend(report.warnings);
    ValidateResponse {
        model: Some(model.name().to_string()),
        errors: report.errors.into_iter().map(Into::into).collect(),
        warnings: warnings.into_iter().map(Into::into).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urdf: Option<String>,
    pub q: Vec<f64>,
}

pub fn fk(req: &FkRequest, fallback: &RobotModel) -> Result<FkResult, ApiError> {
    let model = resolve_model(req.urdf.as_deref(), fallback)?;
    Ok(forward_kinematics(&model, &joint_state(&model, &req.q))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urdf: Option<String>,
    pub target: [f64; 3],
    /// Defaults to the middle of every joint range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub params: IkParams,
}

pub fn ik(req: &IkRequest, fallback: &RobotModel) -> Result<IkResult, ApiError> {
    let model = resolve_model(req.urdf.as_deref(), fallback)?;
    let q0 = match &req.q0 {
        Some(q) => joint_state(&model, q),
        None => JointState::mid_range(&model),
    };
    Ok(solve_ik(
        &model,
        &q0,
        Vector3::from(req.target),
        &req.params,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urdf: Option<String>,
    pub q: Vec<f64>,
    /// m/s², defaults to standard gravity along −z.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<[f64; 3]>,
}

pub fn torque(req: &TorqueRequest, fallback: &RobotModel) -> Result<TorqueReport, ApiError> {
    let model = resolve_model(req.urdf.as_deref(), fallback)?;
    let g = req.gravity.unwrap_or(DEFAULT_GRAVITY);
    if !g.iter().all(|v| v.is_finite()) {
        return Err(ApiError::new("InvalidParams", "gravity must be finite"));
    }
    Ok(gravity_torques(&model, &joint_state(&model, &req.q), g)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollideRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urdf: Option<String>,
    pub q: Vec<f64>,
}

pub fn collide(req: &CollideRequest, fallback: &RobotModel) -> Result<CollisionReport, ApiError> {
    let model = resolve_model(req.urdf.as_deref(), fallback)?;
    Ok(check_self_collision(&model, &joint_state(&model, &req.q))?)
}

/// A command as sent over the socket or `POST /api/command`; `id` is echoed
/// in the ack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(flatten)]
    pub command: CommandMessage,
}

/// An ack together with the tick the command was applied at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedAck {
    pub tick: u64,
    #[serde(flatten)]
    pub ack: Ack,
}

/// Everything the service sends down the socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateMessage),
    Ack(AppliedAck),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
    pub tick: u64,
    pub tick_rate: f64,
}
