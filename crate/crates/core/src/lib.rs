//! Software model of a desk-scale five-joint teaching arm.
//!
//! The crate covers the URDF-subset model, forward kinematics and position
//! Jacobians, static gravity torques, damped pseudo-inverse IK, box-based
//! self-collision checks, both operator control modes, the emulated servo
//! serial link and the deterministic simulation loop built on top of them.

pub mod api;
pub mod collision;
pub mod control;
pub mod ik;
pub mod kinematics;
pub mod model;
pub mod sim;
pub mod transform;
pub mod urdf;
pub mod validate;

pub use collision::{check_self_collision, obb_intersect, world_boxes, CollisionReport, ObbWorld};
pub use ik::{damped_pinv, solve_ik, IkError, IkParams, IkResult, IkStatus};
pub use kinematics::{
    forward_kinematics, gravity_torques, position_jacobian, FkResult, JointState, KinematicsError,
    TorqueReport, DEFAULT_GRAVITY,
};
pub use model::{
    CollisionBox, JointKind, JointLimits, JointSpec, LinkSpec, ParseError, RobotModel,
};
pub use transform::RigidTransform;
pub use urdf::{
    builtin_tara_model, builtin_tara_urdf, emit_urdf, parse_urdf, parse_urdf_with_warnings,
};
pub use validate::{validate_model, Finding, FindingCode, ValidationReport};
