use std::path::Path;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, SessionConfig};
use super::log::{EventLog, LogError};
use crate::coordinator::{Backends, SessionState, TurnEngine, TurnError};
use crate::domain::{AgentId, InteractionContext, TurnRecord, Utterance};
use crate::events::{Event, EventRecord, EventSink};
use crate::world::WorldState;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("session is closed")]
    Closed,
    #[error("utterance text is empty")]
    EmptyText,
    #[error("unknown addressee {0}")]
    UnknownAddressee(String),
    #[error(transparent)]
    Turn(#[from] TurnError),
}

/// Conversation and world state at a point in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub context: InteractionContext,
    pub world: WorldState,
}

/// Sink that optionally sleeps so logical time advances at
/// `dilation` wall-milliseconds per logical millisecond.
struct PacedSink<'a> {
    log: &'a mut EventLog,
    dilation: f64,
    last_t: u64,
}

impl EventSink for PacedSink<'_> {
    fn emit(&mut self, t_logical_ms: u64, event: Event) {
        if self.dilation > 0.0 && t_logical_ms > self.last_t {
            let wait = (t_logical_ms - self.last_t) as f64 * self.dilation;
            std::thread::sleep(Duration::from_secs_f64(wait / 1000.0));
        }
        self.last_t = self.last_t.max(t_logical_ms);
        self.log.append(t_logical_ms, event);
    }
}

/// One interaction session: the turn engine, its mutable state and the log.
pub struct Session {
    config: SessionConfig,
    engine: TurnEngine,
    state: SessionState,
    log: EventLog,
    paced: bool,
    closed: bool,
}

impl Session {
    /// Builds a session and records `session_start`. Pass `log_path` to
    /// mirror the log to disk.
    pub fn create(config: SessionConfig, session_id: &str, log_path: Option<&Path>) -> Result<Self, SessionError> {
        config.validate()?;
        let backends = config.backends()?;
        Self::with_backends(config, session_id, log_path, backends)
    }

    /// Like [`Session::create`] but with caller-supplied adapters; the
    /// config's backend section is recorded but not used.
    pub fn with_backends(
        config: SessionConfig,
        session_id: &str,
        log_path: Option<&Path>,
        backends: Backends,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        let engine = TurnEngine::new(
            config.profiles(),
            config.arbitration(),
            config.planner(),
            config.executor(),
            backends,
        );
        let state = SessionState::new(config.initial_world());
        let mut log = match log_path {
            Some(p) => EventLog::with_file(session_id, p)?,
            None => EventLog::new(session_id),
        };
        log.append(
            0,
            Event::SessionStart {
                seed: config.seed,
                config: Box::new(config.clone()),
            },
        );
        log.flush()?;
        Ok(Self {
            config,
            engine,
            state,
            log,
            paced: false,
            closed: false,
        })
    }

    /// Sleep between events according to `time_dilation`. Off by default so
    /// batch runs complete instantly.
    pub fn set_paced(&mut self, paced: bool) {
        self.paced = paced;
    }

    pub fn id(&self) -> &str {
        self.log.session_id()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn roster(&self) -> &[crate::domain::AgentProfile] {
        &self.engine.roster
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut EventLog {
        &mut self.log
    }

    pub fn world(&self) -> &WorldState {
        &self.state.world
    }

    pub fn context(&self) -> &InteractionContext {
        &self.state.context
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            context: self.state.context.clone(),
            world: self.state.world.clone(),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn close(&mut self) {
        self.closed = true;
        let _ = self.log.flush();
    }

    /// Runs one turn triggered by a human utterance.
    pub fn post_utterance(&mut self, text: &str, addressee: Option<&str>) -> Result<TurnRecord, SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        if text.trim().is_empty() {
            return Err(SessionError::EmptyText);
        }
        let mut trigger = Utterance::human(text, self.state.world.clock_ms);
        if let Some(a) = addressee {
            let id = AgentId::new(a)
                .ok()
                .filter(|id| self.engine.roster.iter().any(|p| &p.id == id))
                .ok_or_else(|| SessionError::UnknownAddressee(a.to_string()))?;
            trigger = trigger.addressed_to(id);
        }
        let last_t = self.log.records().last().map_or(0, |r| r.t_logical_ms);
        let mut sink = PacedSink {
            log: &mut self.log,
            dilation: if self.paced { self.config.time_dilation } else { 0.0 },
            last_t,
        };
        let record = self.engine.run_turn(&mut self.state, trigger, &mut sink)?;
        self.log.flush()?;
        Ok(record)
    }
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id())
            .field("events", &self.log.len())
            .field("turns", &self.state.turns)
            .field("closed", &self.closed)
            .finish()
    }
}

/// Thread-safe wrapper that serves concurrent callers strictly in arrival
/// order.
pub struct SessionHandle {
    session: Mutex<Session>,
    tickets: Mutex<Tickets>,
    turn_done: Condvar,
}

#[derive(Default)]
struct Tickets {
    next: u64,
    serving: u64,
}

struct TicketGuard<'a> {
    handle: &'a SessionHandle,
}

impl Drop for TicketGuard<'_> {
    fn drop(&mut self) {
        let mut t = self.handle.tickets.lock().unwrap_or_else(|e| e.into_inner());
        t.serving += 1;
        self.handle.turn_done.notify_all();
    }
}

impl SessionHandle {
    pub fn new(session: Session) -> Self {
        Self {
            session: Mutex::new(session),
            tickets: Mutex::new(Tickets::default()),
            turn_done: Condvar::new(),
        }
    }

    /// Locks the session for inspection. Do not hold across turns.
    pub fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Queues a turn; turns run one at a time in FIFO order of this call.
    pub fn post_utterance(&self, text: &str, addressee: Option<&str>) -> Result<TurnRecord, SessionError> {
        let ticket = {
            let mut t = self.tickets.lock().unwrap_or_else(|e| e.into_inner());
            let ticket = t.next;
            t.next += 1;
            ticket
        };
        let _guard = {
            let mut t = self.tickets.lock().unwrap_or_else(|e| e.into_inner());
            while t.serving != ticket {
                t = self.turn_done.wait(t).unwrap_or_else(|e| e.into_inner());
            }
            TicketGuard { handle: self }
        };
        self.lock().post_utterance(text, addressee)
    }

    pub fn close(&self) {
        self.lock().close();
    }

    pub fn events_since(&self, from_seq: u64) -> Vec<EventRecord> {
        self.lock().log().since(from_seq).to_vec()
    }
}
