use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::JointState;
use crate::model::JointSpec;

/// Full-scale reading of the 10-bit potentiometer ADC.
pub const ADC_MAX: u16 = 1023;
/// Potentiometer channels: base, shoulder, elbow, wrist.
pub const POT_CHANNELS: usize = 4;
pub const PULSE_MIN_US: f64 = 500.0;
pub const PULSE_MAX_US: f64 = 2500.0;
/// 50 Hz servo frame.
pub const PWM_FRAME_US: f64 = 20_000.0;
/// 12-bit PWM driver counter.
pub const PWM_RESOLUTION: f64 = 4096.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("potentiometer channel {0} out of range 0..{POT_CHANNELS}")]
    ChannelOutOfRange(u8),
    #[error("ADC reading {0} exceeds {ADC_MAX}")]
    AdcOutOfRange(u16),
    #[error("angle {angle} outside [{lower}, {upper}] for joint `{joint}`")]
    AngleOutOfRange {
        joint: String,
        angle: f64,
        lower: f64,
        upper: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PotReading {
    pub channel: u8,
    pub adc: u16,
}

impl PotReading {
    pub fn new(channel: u8, adc: u16) -> Result<Self, ControlError> {
        if usize::from(channel) >= POT_CHANNELS {
            return Err(ControlError::ChannelOutOfRange(channel));
        }
        if adc > ADC_MAX {
            return Err(ControlError::AdcOutOfRange(adc));
        }
        Ok(Self { channel, adc })
    }
}

/// Linear map of the ADC range onto the joint's limits, exact at both ends.
pub fn pot_to_angle(reading: PotReading, joint: &JointSpec) -> Result<f64, ControlError> {
    let reading = PotReading::new(reading.channel, reading.adc)?;
    let l = &joint.limits;
    Ok(match reading.adc {
        0 => l.lower,
        ADC_MAX => l.upper,
        adc => {
            let angle = l.lower + (f64::from(adc) / f64::from(ADC_MAX)) * l.range();
            l.clamp(angle)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoCommand {
    pub joint_index: usize,
    /// Radians.
    pub angle: f64,
    /// Microseconds, within [500, 2500].
    pub pulse_width: f64,
    /// `round(pulse_width · 4096 / 20000)`.
    pub pwm_counts: u16,
}

pub fn pulse_to_counts(pulse_width_us: f64) -> u16 {
    (pulse_width_us * PWM_RESOLUTION / PWM_FRAME_US).round() as u16
}

/// Maps the joint's limit range linearly onto 500–2500 µs. A zero-range joint
/// sits at the 1500 µs center.
pub fn angle_to_pulse(
    joint_index: usize,
    angle: f64,
    joint: &JointSpec,
) -> Result<ServoCommand, ControlError> {
    let l = &joint.limits;
    if !l.contains(angle) {
        return Err(ControlError::AngleOutOfRange {
            joint: joint.name.clone(),
            angle,
            lower: l.lower,
            upper: l.upper,
        });
    }
    let fraction = if l.range() > 0.0 {
        (angle - l.lower) / l.range()
    } else {
        0.5
    };
    let pulse_width = PULSE_MIN_US + fraction * (PULSE_MAX_US - PULSE_MIN_US);
    Ok(ServoCommand {
        joint_index,
        angle,
        pulse_width,
        pwm_counts: pulse_to_counts(pulse_width),
    })
}

/// Toggles `gripper_closed` on the release edge (`previous && !pressed`).
pub fn gripper_from_button(previous: bool, pressed: bool, state: &JointState) -> JointState {
    let mut next = state.clone();
    if previous && !pressed {
        next.gripper_closed = !state.gripper_closed;
    }
    next
}

/// Edge detector for the single gripper push-button.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GripperButton {
    pub pressed: bool,
}

impl GripperButton {
    pub fn update(&mut self, pressed: bool, state: &JointState) -> JointState {
        let next = gripper_from_button(self.pressed, pressed, state);
        self.pressed = pressed;
        next
    }
}

/// Remaining gaps this small count as arrived, absorbing rounding in
/// repeated `v·dt` steps.
const ARRIVAL_SLACK: f64 = 1e-12;

/// Moves each joint toward `target` by at most `max_velocity[i] · dt`.
pub fn slew_limit(
    current: &JointState,
    target: &JointState,
    dt: f64,
    max_velocity: &[f64],
) -> JointState {
    debug_assert!(dt > 0.0);
    let q = current
        .q
        .iter()
        .zip(&target.q)
        .zip(max_velocity)
        .map(|((&c, &t), &v)| {
            let gap = t - c;
            let bound = v * dt;
            if gap.abs() <= bound + ARRIVAL_SLACK {
                t
            } else {
                c + bound.copysign(gap)
            }
        })
        .collect();
    JointState {
        q,
        gripper_closed: target.gripper_closed,
        timestamp: current.timestamp + dt,
    }
}
