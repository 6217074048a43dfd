//! Realtime-paced simulation driven by client messages.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender, TrySendError};
use ific::baselines::ControllerKind;
use ific::config::RunConfig;
use ific::error::{ConfigError, SimulationError};
use ific::geometry::Wrench;
use ific::scenarios::Simulation;
use ific::trace::TraceRecord;

use crate::protocol::{ClientMessage, Forces, Powers, ServerMessage, Snapshot, Tanks, SCHEMA_VERSION};

/// A simulation plus the pause state and the latest record.
pub struct LiveSession {
    sim: Simulation,
    paused: bool,
    last: Option<TraceRecord>,
}

impl LiveSession {
    pub fn new(config: &RunConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            sim: Simulation::new(config)?,
            paused: false,
            last: None,
        })
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn last_record(&self) -> Option<&TraceRecord> {
        self.last.as_ref()
    }

    pub fn apply(&mut self, msg: &ClientMessage) -> Result<(), String> {
        match msg {
            ClientMessage::Wrench { value } => self.sim.set_live_wrench(Wrench::from_array(*value)),
            ClientMessage::SetParam { key, value } => {
                self.sim.set_parameter(key, *value).map_err(|e| e.to_string())?;
            }
            ClientMessage::Pause => self.paused = true,
            ClientMessage::Resume => self.paused = false,
            ClientMessage::Reset => {
                self.sim.reset();
                self.last = None;
            }
            ClientMessage::SelectController { controller } => {
                self.sim.select_controller(*controller).map_err(|e| e.to_string())?;
                self.last = None;
            }
        }
        Ok(())
    }

    /// One control period unless paused. A failed step pauses the session;
    /// only `reset` or `select_controller` make progress possible again.
    pub fn advance(&mut self) -> Result<bool, SimulationError> {
        if self.paused {
            return Ok(false);
        }
        match self.sim.step() {
            Ok(rec) => {
                self.last = Some(rec);
                Ok(true)
            }
            Err(e) => {
                self.paused = true;
                Err(e)
            }
        }
    }

    /// State at the current time. Before the first step of a run the forces
    /// and powers are zero and the gates are open.
    pub fn snapshot(&self) -> Snapshot {
        let kind = self.sim.kind();
        if let Some(rec) = &self.last {
            return Snapshot::from_record(rec, kind, self.paused);
        }
        let state = self.sim.state();
        let tanks = self.sim.controller().tank_energies();
        Snapshot {
            schema_version: SCHEMA_VERSION,
            t: self.sim.time(),
            controller: kind,
            paused: self.paused,
            pose: state.pose().into(),
            twist: state.twist.0.into(),
            tanks: Tanks {
                Ef: tanks.force_total,
                EIf: tanks.force_inter,
                Ei: tanks.impedance_total,
                EIi: tanks.impedance_inter,
            },
            damping: [1.0; 4],
            powers: Powers::default(),
            forces: Forces::default(),
            lambda_c: false,
        }
    }

    pub fn controller(&self) -> ControllerKind {
        self.sim.kind()
    }
}

/// A client message with the channel its errors go back on.
pub struct Envelope {
    pub message: ClientMessage,
    pub reply: Option<Sender<ServerMessage>>,
}

/// Most physics steps taken between two looks at the clock.
const MAX_BURST: u64 = 200;

/// Runs `session` until `stop` is set. Simulated time follows the wall clock
/// scaled by `realtime_factor`; when behind, every step is still taken.
/// Commands are drained before each step and snapshots are offered to
/// `out` at `rate` Hz of wall time, dropped when the queue is full.
pub fn run_physics(
    mut session: LiveSession,
    commands: Receiver<Envelope>,
    out: Sender<ServerMessage>,
    rate: f64,
    realtime_factor: f64,
    stop: Arc<AtomicBool>,
) -> LiveSession {
    let dt = session.simulation().config().dt;
    let period = Duration::from_secs_f64(1.0 / rate);
    let mut anchor = (Instant::now(), session.simulation().cycle());
    let mut next_snapshot = Instant::now();

    let offer = |msg: ServerMessage| match out.try_send(msg) {
        Ok(()) | Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {}
    };

    while !stop.load(Ordering::Relaxed) {
        let mut burst = 0;
        loop {
            let was_paused = session.paused();
            let cycle = session.simulation().cycle();
            for env in commands.try_iter() {
                if let Err(message) = session.apply(&env.message) {
                    log::info!("rejected {:?}: {message}", env.message);
                    if let Some(reply) = env.reply {
                        let _ = reply.try_send(ServerMessage::error(message));
                    }
                }
            }
            if session.paused() != was_paused || session.simulation().cycle() != cycle {
                anchor = (Instant::now(), session.simulation().cycle());
            }
            let elapsed = anchor.0.elapsed().as_secs_f64() * realtime_factor;
            let due = anchor.1 + (elapsed / dt) as u64;
            if session.paused() || session.simulation().cycle() >= due || burst >= MAX_BURST {
                break;
            }
            if let Err(e) = session.advance() {
                log::warn!("simulation stopped at t = {:.3} s: {e}", session.simulation().time());
                offer(ServerMessage::error(format!("simulation stopped: {e}; reset to continue")));
            }
            burst += 1;
        }

        let now = Instant::now();
        if now >= next_snapshot {
            offer(ServerMessage::State(Box::new(session.snapshot())));
            next_snapshot += period;
            if next_snapshot < now {
                next_snapshot = now + period;
            }
        }
        if burst < MAX_BURST {
            thread::sleep(Duration::from_micros(500));
        }
    }
    session
}
