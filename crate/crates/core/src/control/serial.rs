//! ASCII line protocol between the host and the (emulated) servo controller.
//!
//! A frame is `<op>,<args...>,*<ck>\n`: comma-terminated fields, then `*` and
//! two lowercase hex digits holding the XOR of every byte before the `*`.
//!
//! | op | args                         |
//! |----|------------------------------|
//! | J  | joint index 0–4, centidegrees 0–18000 |
//! | A  | five centidegree values      |
//! | G  | 0 (open) or 1 (closed)       |
//! | P  | none                         |
//!
//! The controller answers `ok\n` or `err,<code>\n`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mapping::{pulse_to_counts, PULSE_MAX_US, PULSE_MIN_US};
use crate::kinematics::JointState;
use crate::model::{JointSpec, RobotModel};

pub const SERVO_CHANNELS: usize = 5;
pub const MAX_CENTIDEGREES: u16 = 18_000;
/// Longer lines cannot be valid frames; they are reported once at the next LF.
pub const MAX_FRAME_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Command {
    SetJoint { index: u8, centidegrees: u16 },
    SetAll([u16; SERVO_CHANNELS]),
    Gripper(bool),
    Ping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
pub enum FrameError {
    #[error("bad checksum")]
    BadChecksum,
    #[error("bad opcode")]
    BadOpcode,
    #[error("wrong field count")]
    FieldCount,
    #[error("value out of range")]
    ValueRange,
}

impl FrameError {
    pub fn code(&self) -> &'static str {
        match self {
            FrameError::BadChecksum => "bad_checksum",
            FrameError::BadOpcode => "bad_opcode",
            FrameError::FieldCount => "field_count",
            FrameError::ValueRange => "value_range",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Some(match code {
            "bad_checksum" => FrameError::BadChecksum,
            "bad_opcode" => FrameError::BadOpcode,
            "field_count" => FrameError::FieldCount,
            "value_range" => FrameError::ValueRange,
            _ => return None,
        })
    }
}

/// One LF-terminated ASCII frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerialFrame(Vec<u8>);

impl SerialFrame {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Display for SerialFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

pub fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

pub fn encode_frame(cmd: &Command) -> SerialFrame {
    let mut body = String::new();
    match cmd {
        Command::SetJoint {
            index,
            centidegrees,
        } => body.push_str(&format!("J,{index},{centidegrees},")),
        Command::SetAll(values) => {
            body.push_str("A,");
            for v in values {
                body.push_str(&format!("{v},"));
            }
        }
        Command::Gripper(closed) => body.push_str(&format!("G,{},", u8::from(*closed))),
        Command::Ping => body.push_str("P,"),
    }
    let ck = checksum(body.as_bytes());
    SerialFrame(format!("{body}*{ck:02x}\n").into_bytes())
}

fn hex_digit(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        _ => None,
    }
}

fn field(text: &[u8], max: u16) -> Result<u16, FrameError> {
    if text.is_empty() || text.len() > 5 || !text.iter().all(u8::is_ascii_digit) {
        return Err(FrameError::ValueRange);
    }
    let value = text
        .iter()
        .fold(0u32, |acc, d| acc * 10 + u32::from(d - b'0'));
    if value > u32::from(max) {
        return Err(FrameError::ValueRange);
    }
    Ok(value as u16)
}

/// Decodes one frame; a single trailing LF is optional.
///
/// Checks run in order checksum, opcode, field count, values, so every
/// malformed frame maps to exactly one error.
pub fn decode_frame(frame: &[u8]) -> Result<Command, FrameError> {
    let line = frame.strip_suffix(b"\n").unwrap_or(frame);
    let star = line
        .iter()
        .position(|&b| b == b'*')
        .ok_or(FrameError::BadChecksum)?;
    let (body, ck) = (&line[..star], &line[star + 1..]);
    let [hi, lo] = ck else {
        return Err(FrameError::BadChecksum);
    };
    let expected = match (hex_digit(*hi), hex_digit(*lo)) {
        (Some(h), Some(l)) => (h << 4) | l,
        _ => return Err(FrameError::BadChecksum),
    };
    if checksum(body) != expected {
        return Err(FrameError::BadChecksum);
    }

    let mut fields: Vec<&[u8]> = body.split(|&b| b == b',').collect();
    let arity = match fields[0] {
        b"J" => 2,
        b"A" => SERVO_CHANNELS,
        b"G" => 1,
        b"P" => 0,
        _ => return Err(FrameError::BadOpcode),
    };
    // Every field is comma-terminated, so the split ends with an empty piece.
    if fields.len() != arity + 2 || !fields.pop().is_some_and(|f| f.is_empty()) {
        return Err(FrameError::FieldCount);
    }
    let args = &fields[1..];
    Ok(match fields[0] {
        b"J" => Command::SetJoint {
            index: field(args[0], (SERVO_CHANNELS - 1) as u16)? as u8,
            centidegrees: field(args[1], MAX_CENTIDEGREES)?,
        },
        b"A" => {
            let mut values = [0u16; SERVO_CHANNELS];
            for (v, a) in values.iter_mut().zip(args) {
                *v = field(a, MAX_CENTIDEGREES)?;
            }
            Command::SetAll(values)
        }
        b"G" => Command::Gripper(field(args[0], 1)? == 1),
        _ => Command::Ping,
    })
}

/// Splits a byte stream at LF and decodes each line.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    overlong: bool,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Result<Command, FrameError>> {
        let mut out = Vec::new();
        for &b in bytes {
            if b == b'\n' {
                out.push(if self.overlong {
                    Err(FrameError::FieldCount)
                } else {
                    decode_frame(&self.buf)
                });
                self.buf.clear();
                self.overlong = false;
            } else if self.buf.len() >= MAX_FRAME_LEN {
                self.overlong = true;
            } else {
                self.buf.push(b);
            }
        }
        out
    }

    /// Bytes received since the last LF.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Ok,
    Err(FrameError),
}

impl Response {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Response::Ok => b"ok\n".to_vec(),
            Response::Err(e) => format!("err,{}\n", e.code()).into_bytes(),
        }
    }

    pub fn decode(line: &[u8]) -> Option<Self> {
        let line = line.strip_suffix(b"\n").unwrap_or(line);
        if line == b"ok" {
            return Some(Response::Ok);
        }
        let code = std::str::from_utf8(line.strip_prefix(b"err,")?).ok()?;
        FrameError::from_code(code).map(Response::Err)
    }
}

pub fn centidegrees_to_pulse(centidegrees: u16) -> f64 {
    PULSE_MIN_US
        + f64::from(centidegrees) * (PULSE_MAX_US - PULSE_MIN_US) / f64::from(MAX_CENTIDEGREES)
}

/// Position of `angle` within the joint's range, as servo centidegrees.
pub fn angle_to_centidegrees(angle: f64, joint: &JointSpec) -> u16 {
    let l = &joint.limits;
    if l.range() <= 0.0 {
        return MAX_CENTIDEGREES / 2;
    }
    let fraction = ((angle - l.lower) / l.range()).clamp(0.0, 1.0);
    (fraction * f64::from(MAX_CENTIDEGREES)).round() as u16
}

/// Host-side frames that drive the servos to `state`.
pub fn frames_for_state(model: &RobotModel, state: &JointState) -> Vec<Command> {
    let values: Vec<u16> = state
        .q
        .iter()
        .enumerate()
        .map(|(slot, &a)| angle_to_centidegrees(a, model.actuated_joint(slot)))
        .collect();
    match <[u16; SERVO_CHANNELS]>::try_from(values.as_slice()) {
        Ok(all) => vec![Command::SetAll(all)],
        Err(_) => values
            .iter()
            .take(SERVO_CHANNELS)
            .enumerate()
            .map(|(i, &centidegrees)| Command::SetJoint {
                index: i as u8,
                centidegrees,
            })
            .collect(),
    }
}

/// Stand-in for the microcontroller and PWM driver board: consumes frames,
/// answers each one and holds the pulse width of every channel.
#[derive(Debug, Clone)]
pub struct EmulatedServoBoard {
    decoder_buf: Vec<u8>,
    overlong: bool,
    centidegrees: [u16; SERVO_CHANNELS],
    gripper_channel: usize,
    frames_ok: u64,
    frames_err: u64,
}

impl Default for EmulatedServoBoard {
    fn default() -> Self {
        Self::new(SERVO_CHANNELS - 1)
    }
}

impl EmulatedServoBoard {
    pub fn new(gripper_channel: usize) -> Self {
        Self {
            decoder_buf: Vec::new(),
            overlong: false,
            centidegrees: [MAX_CENTIDEGREES / 2; SERVO_CHANNELS],
            gripper_channel,
            frames_ok: 0,
            frames_err: 0,
        }
    }

    /// Feeds raw bytes; returns the response bytes for every completed line.
    pub fn receive(&mut self, bytes: &[u8]) -> Vec<u8> {
        let mut decoder = FrameDecoder {
            buf: std::mem::take(&mut self.decoder_buf),
            overlong: self.overlong,
        };
        let results = decoder.push(bytes);
        self.decoder_buf = decoder.buf;
        self.overlong = decoder.overlong;
        let mut out = Vec::new();
        for r in results {
            let resp = match r {
                Ok(cmd) => {
                    self.apply(cmd);
                    self.frames_ok += 1;
                    Response::Ok
                }
                Err(e) => {
                    self.frames_err += 1;
                    Response::Err(e)
                }
            };
            out.extend(resp.encode());
        }
        out
    }

    fn apply(&mut self, cmd: Command) {
        match cmd {
            Command::SetJoint {
                index,
                centidegrees,
            } => self.centidegrees[usize::from(index)] = centidegrees,
            Command::SetAll(values) => self.centidegrees = values,
            Command::Gripper(closed) => {
                self.centidegrees[self.gripper_channel] = if closed { MAX_CENTIDEGREES } else { 0 }
            }
            Command::Ping => {}
        }
    }

    pub fn centidegrees(&self) -> [u16; SERVO_CHANNELS] {
        self.centidegrees
    }

    pub fn pulse_widths(&self) -> [f64; SERVO_CHANNELS] {
        self.centidegrees.map(centidegrees_to_pulse)
    }

    pub fn pwm_counts(&self) -> [u16; SERVO_CHANNELS] {
        self.pulse_widths().map(pulse_to_counts)
    }

    pub fn frame_counts(&self) -> (u64, u64) {
        (self.frames_ok, self.frames_err)
    }
}
