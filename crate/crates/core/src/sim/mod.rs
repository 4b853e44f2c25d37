//! Live simulation state: command handling, the fixed-rate step and the
//! snapshots broadcast to clients.

mod record;

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::collision::{check_self_collision, CollisionReport};
use crate::control::serial::{encode_frame, frames_for_state, EmulatedServoBoard};
use crate::control::{pot_to_angle, slew_limit, validate_and_stage, PotReading, POT_CHANNELS};
use crate::ik::{solve_ik, IkParams, IkStatus};
use crate::kinematics::{end_effector_position, JointState, KinematicsError};
use crate::model::RobotModel;

pub use record::{
    entry_line, parse_record, replay, RecordEntry, RecordError, Recorder, SessionLog,
};

/// Matches the 50 Hz servo frame.
pub const DEFAULT_TICK_RATE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Direct,
    Pot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub joint_state: JointState,
    pub targets: JointState,
    pub mode: Mode,
    pub collision_flag: bool,
    pub last_report: Option<CollisionReport>,
    pub tick: u64,
    pub sim_time: f64,
    /// Last button level seen, for release-edge detection.
    pub button_pressed: bool,
    pub ik_goal: Option<[f64; 3]>,
}

impl SimState {
    pub fn initial(model: &RobotModel) -> Self {
        let home = JointState::home(model);
        Self {
            joint_state: home.clone(),
            targets: home,
            mode: Mode::Direct,
            collision_flag: false,
            last_report: None,
            tick: 0,
            sim_time: 0.0,
            button_pressed: false,
            ik_goal: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CommandMessage {
    SetMode {
        mode: Mode,
    },
    /// Either every actuated joint, or every joint except the gripper.
    DirectTarget {
        q: Vec<f64>,
    },
    PotInput {
        adc: [u16; POT_CHANNELS],
    },
    Button {
        pressed: bool,
    },
    IkGoal {
        target: [f64; 3],
    },
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckCode {
    ModeMismatch,
    MalformedCommand,
    JointLimitViolation,
    CollisionRejected,
    IkFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub id: Option<u64>,
    pub accepted: bool,
    pub code: Option<AckCode>,
    pub reason: Option<String>,
    /// The collision report behind a rejected direct motion.
    pub warning: Option<CollisionReport>,
}

impl Ack {
    fn accepted() -> Self {
        Self {
            id: None,
            accepted: true,
            code: None,
            reason: None,
            warning: None,
        }
    }

    fn rejected(code: AckCode, reason: impl Into<String>) -> Self {
        Self {
            id: None,
            accepted: false,
            code: Some(code),
            reason: Some(reason.into()),
            warning: None,
        }
    }

    /// The ack for input that never parsed as a command.
    pub fn malformed(reason: impl Into<String>) -> Self {
        Self::rejected(AckCode::MalformedCommand, reason)
    }

    pub fn with_id(mut self, id: Option<u64>) -> Self {
        self.id = id;
        self
    }
}

fn gripper_angle(model: &RobotModel, closed: bool) -> Option<(usize, f64)> {
    let slot = model.gripper_slot()?;
    let l = &model.actuated_joint(slot).limits;
    Some((slot, if closed { l.upper } else { l.lower }))
}

fn limit_reject(e: KinematicsError) -> Ack {
    match e {
        KinematicsError::DimensionMismatch { .. } => {
            Ack::rejected(AckCode::MalformedCommand, e.to_string())
        }
        KinematicsError::JointLimitViolation { .. } => {
            Ack::rejected(AckCode::JointLimitViolation, e.to_string())
        }
    }
}

/// Stages `q` through the collision gate; on approval it becomes the target.
fn stage_direct(model: &RobotModel, state: &mut SimState, mut q: JointState) -> Ack {
    if q.q.len() != model.dof() {
        return limit_reject(KinematicsError::DimensionMismatch {
            expected: model.dof(),
            got: q.q.len(),
        });
    }
    if let Some(slot) = model.gripper_slot() {
        q.gripper_closed = q.q[slot] > model.actuated_joint(slot).limits.mid();
    }
    match validate_and_stage(model, &q) {
        Err(e) => limit_reject(e),
        Ok(staged) if staged.approved() => {
            q.timestamp = state.targets.timestamp;
            state.targets = q;
            Ack::accepted()
        }
        Ok(staged) => {
            let report = staged.warning.expect("rejected motions carry a report");
            let pairs: Vec<String> = report
                .colliding_pairs
                .iter()
                .map(|(a, b)| format!("{a}/{b}"))
                .collect();
            Ack {
                warning: Some(report),
                ..Ack::rejected(
                    AckCode::CollisionRejected,
                    format!("collision predicted between {}", pairs.join(", ")),
                )
            }
        }
    }
}

/// Applies one operator command. Rejected commands leave the state unchanged.
pub fn handle_command(
    model: &RobotModel,
    state: &SimState,
    cmd: &CommandMessage,
    ik_params: &IkParams,
) -> (SimState, Ack) {
    let mut next = state.clone();
    let require = |mode: Mode| {
        (state.mode != mode).then(|| {
            Ack::rejected(
                AckCode::ModeMismatch,
                format!(
                    "command requires {mode:?} mode, session is in {:?}",
                    state.mode
                ),
            )
        })
    };
    let ack = match cmd {
        CommandMessage::SetMode { mode } => {
            if *mode == Mode::Direct && state.mode != Mode::Direct {
                // Hold position; pot-mode targets never passed the gate.
                let mut hold = state.joint_state.clone();
                hold.timestamp = state.targets.timestamp;
                next.targets = hold;
            }
            next.mode = *mode;
            Ack::accepted()
        }
        CommandMessage::DirectTarget { q } => {
            if let Some(mismatch) = require(Mode::Direct) {
                mismatch
            } else if !q.iter().all(|v| v.is_finite()) {
                Ack::rejected(AckCode::MalformedCommand, "joint values must be finite")
            } else {
                let arm = model.arm_slots();
                let full = if q.len() == arm.len() && q.len() != model.dof() {
                    let mut full = state.targets.q.clone();
                    for (&slot, &v) in arm.iter().zip(q) {
                        full[slot] = v;
                    }
                    full
                } else {
                    q.clone()
                };
                stage_direct(model, &mut next, JointState::new(full))
            }
        }
        CommandMessage::PotInput { adc } => {
            if let Some(mismatch) = require(Mode::Pot) {
                mismatch
            } else {
                let mut targets = state.targets.clone();
                let mut ack = Ack::accepted();
                for (channel, (&slot, &value)) in model.arm_slots().iter().zip(adc).enumerate() {
                    match PotReading::new(channel as u8, value)
                        .and_then(|r| pot_to_angle(r, model.actuated_joint(slot)))
                    {
                        Ok(angle) => targets.q[slot] = angle,
                        Err(e) => {
                            ack = Ack::rejected(AckCode::MalformedCommand, e.to_string());
                            break;
                        }
                    }
                }
                if ack.accepted {
                    next.targets = targets;
                }
                ack
            }
        }
        CommandMessage::Button { pressed } => {
            let released = state.button_pressed && !pressed;
            next.button_pressed = *pressed;
            if released {
                let closed = !state.targets.gripper_closed;
                let mut toggled = state.targets.clone();
                toggled.gripper_closed = closed;
                if let Some((slot, angle)) = gripper_angle(model, closed) {
                    toggled.q[slot] = angle;
                }
                if state.mode == Mode::Direct && model.gripper_slot().is_some() {
                    stage_direct(model, &mut next, toggled)
                } else {
                    next.targets = toggled;
                    Ack::accepted()
                }
            } else {
                Ack::accepted()
            }
        }
        CommandMessage::IkGoal { target } => {
            if let Some(mismatch) = require(Mode::Direct) {
                mismatch
            } else {
                next.ik_goal = Some(*target);
                match solve_ik(model, &state.joint_state, Vector3::from(*target), ik_params) {
                    Err(e) => Ack::rejected(AckCode::IkFailed, e.to_string()),
                    Ok(result) if result.status != IkStatus::Converged => Ack::rejected(
                        AckCode::IkFailed,
                        format!(
                            "IK stopped with {:?} after {} iterations, error {:.6} m",
                            result.status,
                            result.iterations(),
                            result.final_error()
                        ),
                    ),
                    Ok(result) => {
                        let mut q = result.q;
                        if let Some(slot) = model.gripper_slot() {
                            q[slot] = state.targets.q[slot];
                        }
                        stage_direct(model, &mut next, JointState::new(q))
                    }
                }
            }
        }
        CommandMessage::Reset => {
            let fresh = SimState::initial(model);
            next = SimState {
                mode: state.mode,
                tick: state.tick,
                sim_time: state.sim_time,
                button_pressed: state.button_pressed,
                ..fresh
            };
            next.joint_state.timestamp = state.sim_time;
            next.targets.timestamp = state.sim_time;
            Ack::accepted()
        }
    };
    if ack.accepted {
        (next, ack)
    } else {
        (state.clone(), ack)
    }
}

/// Advances one tick: slews toward the targets and re-checks self-collision.
pub fn step(model: &RobotModel, state: &SimState, dt: f64) -> SimState {
    let max_velocity: Vec<f64> = (0..model.dof())
        .map(|s| model.actuated_joint(s).limits.max_velocity)
        .collect();
    let tick = state.tick + 1;
    let sim_time = tick as f64 * dt;
    let mut joint_state = slew_limit(&state.joint_state, &state.targets, dt, &max_velocity);
    joint_state.timestamp = sim_time;
    let report =
        check_self_collision(model, &joint_state).expect("slewed state stays within limits");
    SimState {
        collision_flag: !report.is_clear(),
        last_report: Some(report),
        joint_state,
        tick,
        sim_time,
        ..state.clone()
    }
}

/// Rounds to 1e-9 so serialized snapshots do not depend on the last bits of
/// transcendental functions.
pub fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9 + 0.0
}

fn rounded(js: &JointState) -> JointState {
    JointState {
        q: js.q.iter().copied().map(round9).collect(),
        gripper_closed: js.gripper_closed,
        timestamp: round9(js.timestamp),
    }
}

/// A complete, self-contained copy of the simulation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub tick: u64,
    pub sim_time: f64,
    pub mode: Mode,
    pub joint_state: JointState,
    pub targets: JointState,
    pub collision_flag: bool,
    pub last_report: Option<CollisionReport>,
    pub button_pressed: bool,
    pub ik_goal: Option<[f64; 3]>,
    /// End-effector position (m).
    pub end_effector: [f64; 3],
    pub servo_pwm_counts: Vec<u16>,
}

impl StateMessage {
    pub fn capture(model: &RobotModel, state: &SimState, board: &EmulatedServoBoard) -> Self {
        let ee = end_effector_position(model, &state.joint_state.q);
        Self {
            tick: state.tick,
            sim_time: round9(state.sim_time),
            mode: state.mode,
            joint_state: rounded(&state.joint_state),
            targets: rounded(&state.targets),
            collision_flag: state.collision_flag,
            last_report: state.last_report.clone(),
            button_pressed: state.button_pressed,
            ik_goal: state.ik_goal.map(|g| g.map(round9)),
            end_effector: [round9(ee.x), round9(ee.y), round9(ee.z)],
            servo_pwm_counts: board.pwm_counts().to_vec(),
        }
    }

    /// The session state this message describes; derived fields are dropped.
    pub fn to_sim_state(&self) -> SimState {
        SimState {
            joint_state: self.joint_state.clone(),
            targets: self.targets.clone(),
            mode: self.mode,
            collision_flag: self.collision_flag,
            last_report: self.last_report.clone(),
            tick: self.tick,
            sim_time: self.sim_time,
            button_pressed: self.button_pressed,
            ik_goal: self.ik_goal,
        }
    }
}

/// Owns one session: the state, the emulated servo board and the clock.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: Arc<RobotModel>,
    state: SimState,
    tick_rate: f64,
    ik_params: IkParams,
    board: EmulatedServoBoard,
}

impl Simulator {
    pub fn new(model: Arc<RobotModel>, tick_rate: f64) -> Self {
        assert!(
            tick_rate > 0.0 && tick_rate.is_finite(),
            "tick rate must be positive"
        );
        let state = SimState::initial(&model);
        let mut sim = Self {
            board: EmulatedServoBoard::new(model.gripper_slot().unwrap_or(4).min(4)),
            model,
            state,
            tick_rate,
            ik_params: IkParams::default(),
        };
        sim.drive_servos();
        sim
    }

    /// Continues a session from a broadcast snapshot.
    pub fn resume(model: Arc<RobotModel>, tick_rate: f64, snapshot: &StateMessage) -> Self {
        let mut sim = Self::new(model, tick_rate);
        sim.state = snapshot.to_sim_state();
        sim.drive_servos();
        sim
    }

    pub fn model(&self) -> &Arc<RobotModel> {
        &self.model
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn tick_rate(&self) -> f64 {
        self.tick_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn board(&self) -> &EmulatedServoBoard {
        &self.board
    }

    pub fn handle(&mut self, cmd: &CommandMessage) -> Ack {
        let (next, ack) = handle_command(&self.model, &self.state, cmd, &self.ik_params);
        self.state = next;
        ack
    }

    pub fn step(&mut self) -> StateMessage {
        self.state = step(&self.model, &self.state, self.dt());
        self.drive_servos();
        self.snapshot()
    }

    pub fn snapshot(&self) -> StateMessage {
        StateMessage::capture(&self.model, &self.state, &self.board)
    }

    /// Only the executed joint state reaches the servo board.
    fn drive_servos(&mut self) {
        for cmd in frames_for_state(&self.model, &self.state.joint_state) {
            let resp = self.board.receive(encode_frame(&cmd).as_bytes());
            debug_assert_eq!(resp, b"ok\n");
        }
    }
}
