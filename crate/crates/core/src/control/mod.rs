//! Operator control modes and the emulated servo hardware boundary.

mod gate;
mod mapping;
pub mod serial;

pub use gate::{validate_and_stage, StagedMotion, Verdict};
pub use mapping::{
    angle_to_pulse, gripper_from_button, pot_to_angle, slew_limit, ControlError, GripperButton,
    PotReading, ServoCommand, ADC_MAX, POT_CHANNELS, PULSE_MAX_US, PULSE_MIN_US, PWM_FRAME_US,
    PWM_RESOLUTION,
};
