//! The single-writer tick loop. Commands arrive on a queue and are applied at
//! the start of the next tick; every tick ends with a broadcast snapshot.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{self, BufWriter};
use std::sync::Arc;
use std::time::Duration;

use armsim_core::api::{AppliedAck, CommandEnvelope, ServerMessage};
use armsim_core::sim::{Ack, CommandMessage, Recorder, SessionLog, Simulator, StateMessage};
use armsim_core::RobotModel;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::{interval, MissedTickBehavior};

/// Queue depth before submitters wait.
const COMMAND_QUEUE: usize = 1024;
/// Snapshots a slow subscriber may fall behind before it skips ahead.
const BROADCAST_BACKLOG: usize = 256;

struct Submission {
    envelope: CommandEnvelope,
    reply: oneshot::Sender<AppliedAck>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session loop has stopped")]
    Stopped,
}

/// Cheap to clone; one per connection or request handler.
#[derive(Clone)]
pub struct SessionHandle {
    model: Arc<RobotModel>,
    tick_rate: f64,
    commands: mpsc::Sender<Submission>,
    latest: watch::Receiver<Arc<StateMessage>>,
    states: broadcast::Sender<Arc<str>>,
}

impl SessionHandle {
    pub fn model(&self) -> &Arc<RobotModel> {
        &self.model
    }

    pub fn tick_rate(&self) -> f64 {
        self.tick_rate
    }

    /// Queues a command and waits for the tick that applies it.
    pub async fn submit(&self, envelope: CommandEnvelope) -> Result<AppliedAck, SessionError> {
        let (reply, rx) = oneshot::channel();
        self.commands
            .send(Submission { envelope, reply })
            .await
            .map_err(|_| SessionError::Stopped)?;
        rx.await.map_err(|_| SessionError::Stopped)
    }

    pub fn latest(&self) -> Arc<StateMessage> {
        self.latest.borrow().clone()
    }

    /// Serialized `ServerMessage::State` lines, one per tick.
    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.states.subscribe()
    }
}

pub struct SessionOptions {
    pub tick_rate: f64,
    pub record: Option<Recorder<BufWriter<File>>>,
    /// Commands injected at their recorded ticks.
    pub replay: Option<SessionLog>,
}

impl SessionOptions {
    pub fn new(tick_rate: f64) -> Self {
        Self {
            tick_rate,
            record: None,
            replay: None,
        }
    }
}

/// The running loop; stopping it flushes the recording.
pub struct SessionTask {
    stop: oneshot::Sender<()>,
    join: JoinHandle<io::Result<()>>,
}

impl SessionTask {
    pub async fn stop(self) -> io::Result<()> {
        let _ = self.stop.send(());
        self.join.await.unwrap_or_else(|e| Err(io::Error::other(e)))
    }
}

pub fn spawn_session(model: Arc<RobotModel>, opts: SessionOptions) -> (SessionHandle, SessionTask) {
    let sim = Simulator::new(model.clone(), opts.tick_rate);
    let (commands, rx) = mpsc::channel(COMMAND_QUEUE);
    let (latest_tx, latest) = watch::channel(Arc::new(sim.snapshot()));
    let (states, _) = broadcast::channel(BROADCAST_BACKLOG);
    let (stop, stop_rx) = oneshot::channel();
    let handle = SessionHandle {
        model,
        tick_rate: opts.tick_rate,
        commands,
        latest,
        states: states.clone(),
    };
    let looped = TickLoop {
        sim,
        rx,
        latest: latest_tx,
        states,
        record: opts.record,
        replay: opts.replay.map(|log| log.commands.into_iter().collect()),
    };
    let join = tokio::spawn(looped.run(stop_rx));
    (handle, SessionTask { stop, join })
}

struct TickLoop {
    sim: Simulator,
    rx: mpsc::Receiver<Submission>,
    latest: watch::Sender<Arc<StateMessage>>,
    states: broadcast::Sender<Arc<str>>,
    record: Option<Recorder<BufWriter<File>>>,
    replay: Option<VecDeque<(u64, CommandMessage)>>,
}

impl TickLoop {
    async fn run(mut self, mut stop: oneshot::Receiver<()>) -> io::Result<()> {
        let mut clock = interval(Duration::from_secs_f64(self.sim.dt()));
        clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let result = loop {
            tokio::select! {
                _ = &mut stop => break Ok(()),
                _ = clock.tick() => {}
            }
            if let Err(e) = self.tick() {
                break Err(e);
            }
        };
        match self.record.as_mut() {
            Some(rec) => result.and(rec.flush()),
            None => result,
        }
    }

    fn tick(&mut self) -> io::Result<()> {
        let now = self.sim.state().tick;
        while let Some((_, cmd)) = self
            .replay
            .as_mut()
            .and_then(|q| q.pop_front_if(|(t, _)| *t <= now))
        {
            self.apply(now, &cmd)?;
        }
        let mut replies = Vec::new();
        while let Ok(sub) = self.rx.try_recv() {
            let ack = self.apply(now, &sub.envelope.command)?;
            replies.push((sub.reply, ack.with_id(sub.envelope.id)));
        }
        let msg = self.sim.step();
        if let Some(rec) = self.record.as_mut() {
            rec.state(&msg)?;
        }
        let line = serde_json::to_string(&ServerMessage::State(msg.clone()))
            .expect("state messages serialize");
        let _ = self.states.send(line.into());
        self.latest.send_replace(Arc::new(msg));
        // acks go out once the tick that applied them is visible
        for (reply, ack) in replies {
            let _ = reply.send(AppliedAck { tick: now, ack });
        }
        Ok(())
    }

    fn apply(&mut self, tick: u64, cmd: &CommandMessage) -> io::Result<Ack> {
        if let Some(rec) = self.record.as_mut() {
            rec.command(tick, cmd)?;
        }
        Ok(self.sim.handle(cmd))
    }
}

/// Opens a recording file and writes its session header.
pub fn create_recorder(
    path: &std::path::Path,
    model: &RobotModel,
    tick_rate: f64,
) -> io::Result<Recorder<BufWriter<File>>> {
    let file = BufWriter::new(File::create(path)?);
    let mut rec = Recorder::new(file, model.name(), tick_rate)?;
    rec.flush()?;
    Ok(rec)
}
