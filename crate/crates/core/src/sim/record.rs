//! Session record files: one `<tick> <json>` line per message.
//!
//! A session starts with a `session` header, then interleaves the commands
//! applied at each tick (before the step) with the state broadcast after it.

use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CommandMessage, Simulator, StateMessage};
use crate::model::RobotModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordEntry {
    Session { model: String, tick_rate: f64 },
    Command { command: CommandMessage },
    State(StateMessage),
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("record has no session header")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn entry_line(tick: u64, entry: &RecordEntry) -> String {
    let json = serde_json::to_string(entry).expect("record entries serialize");
    format!("{tick} {json}\n")
}

pub struct Recorder<W: Write> {
    out: W,
}

impl<W: Write> Recorder<W> {
    pub fn new(mut out: W, model: &str, tick_rate: f64) -> io::Result<Self> {
        out.write_all(
            entry_line(
                0,
                &RecordEntry::Session {
                    model: model.into(),
                    tick_rate,
                },
            )
            .as_bytes(),
        )?;
        Ok(Self { out })
    }

    pub fn command(&mut self, tick: u64, command: &CommandMessage) -> io::Result<()> {
        let entry = RecordEntry::Command {
            command: command.clone(),
        };
        self.out.write_all(entry_line(tick, &entry).as_bytes())
    }

    pub fn state(&mut self, state: &StateMessage) -> io::Result<()> {
        self.out
            .write_all(entry_line(state.tick, &RecordEntry::State(state.clone())).as_bytes())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub model: String,
    pub tick_rate: f64,
    /// In file order.
    pub commands: Vec<(u64, CommandMessage)>,
    /// Raw state lines (with trailing LF), in file order.
    pub state_lines: Vec<String>,
    pub last_state_tick: Option<u64>,
}

impl SessionLog {
    /// Ticks to simulate: through the last recorded state, or one past the
    /// last command when the log holds no states.
    pub fn ticks(&self) -> u64 {
        self.last_state_tick
            .unwrap_or_else(|| self.commands.last().map_or(0, |(t, _)| t + 1))
    }
}

pub fn parse_record(text: &str) -> Result<SessionLog, RecordError> {
    let mut header = None;
    let mut commands = Vec::new();
    let mut state_lines = Vec::new();
    let mut last_state_tick = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| RecordError::Malformed {
            line: lineno,
            message,
        };
        let (tick, json) = line
            .split_once(' ')
            .ok_or_else(|| malformed("expected `<tick> <json>`".into()))?;
        let tick: u64 = tick
            .parse()
            .map_err(|_| malformed(format!("bad tick {tick:?}")))?;
        let entry: RecordEntry =
            serde_json::from_str(json).map_err(|e| malformed(e.to_string()))?;
        match entry {
            RecordEntry::Session { model, tick_rate } => {
                if !(tick_rate > 0.0 && tick_rate.is_finite()) {
                    return Err(malformed(format!("bad tick rate {tick_rate}")));
                }
                header = Some((model, tick_rate));
            }
            RecordEntry::Command { command } => commands.push((tick, command)),
            RecordEntry::State(_) => {
                state_lines.push(format!("{line}\n"));
                last_state_tick = Some(tick);
            }
        }
    }
    let (model, tick_rate) = header.ok_or(RecordError::MissingHeader)?;
    Ok(SessionLog {
        model,
        tick_rate,
        commands,
        state_lines,
        last_state_tick,
    })
}

/// Re-runs the recorded commands on a fresh session and returns the state
/// lines it broadcasts, in the record line format.
pub fn replay(model: Arc<RobotModel>, log: &SessionLog, ticks: Option<u64>) -> Vec<String> {
    let ticks = ticks.unwrap_or_else(|| log.ticks());
    let mut sim = Simulator::new(model, log.tick_rate);
    let mut pending = log.commands.iter().peekable();
    let mut out = Vec::with_capacity(ticks as usize);
    while sim.state().tick < ticks {
        let now = sim.state().tick;
        while let Some((_, cmd)) = pending.next_if(|(t, _)| *t <= now) {
            sim.handle(cmd);
        }
        let msg = sim.step();
        out.push(entry_line(msg.tick, &RecordEntry::State(msg)));
    }
    out
}
