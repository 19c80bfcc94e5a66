//! Event vocabulary of the session log. Serialized as
//! `{"seq":..,"t_logical_ms":..,"session_id":..,"kind":..,"payload":{..}}`.

use serde::{Deserialize, Serialize};

use crate::actions::{ActionSpec, ExecutionStatus, Outcome, Policy, PrimitiveKind};
use crate::adapters::Purpose;
use crate::coordinator::{ScoreVector, SelectionResult};
use crate::domain::{AgentId, Utterance};
use crate::perception::Observation;
use crate::runtime::SessionConfig;
use crate::world::AgentBody;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    SessionStart {
        seed: u64,
        config: Box<SessionConfig>,
    },
    UserUtterance {
        turn_index: u64,
        utterance: Utterance,
    },
    Observation {
        turn_index: u64,
        observation: Box<Observation>,
    },
    Scores {
        turn_index: u64,
        scores: ScoreVector,
    },
    Selection {
        turn_index: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        addressee: Option<AgentId>,
        selection: SelectionResult,
    },
    Plan {
        turn_index: u64,
        agent: AgentId,
        policy: Policy,
        attempts: u32,
        fallback_used: bool,
    },
    ActionStart {
        turn_index: u64,
        agent: AgentId,
        action_index: usize,
        spec: ActionSpec,
        start_ms: u64,
    },
    ActionEnd {
        turn_index: u64,
        agent: AgentId,
        action_index: usize,
        action: PrimitiveKind,
        outcome: Outcome,
        end_ms: u64,
        /// Agent state after the action.
        body: AgentBody,
    },
    Status {
        turn_index: u64,
        agent: AgentId,
        status: ExecutionStatus,
    },
    AgentUtterance {
        turn_index: u64,
        utterance: Utterance,
    },
    Latency {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        turn_index: Option<u64>,
        purpose: Purpose,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agent: Option<AgentId>,
        latency_ms: u64,
        ok: bool,
    },
    Warning {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        turn_index: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agent: Option<AgentId>,
        message: String,
    },
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::SessionStart { .. } => EventKind::SessionStart,
            Event::UserUtterance { .. } => EventKind::UserUtterance,
            Event::Observation { .. } => EventKind::Observation,
            Event::Scores { .. } => EventKind::Scores,
            Event::Selection { .. } => EventKind::Selection,
            Event::Plan { .. } => EventKind::Plan,
            Event::ActionStart { .. } => EventKind::ActionStart,
            Event::ActionEnd { .. } => EventKind::ActionEnd,
            Event::Status { .. } => EventKind::Status,
            Event::AgentUtterance { .. } => EventKind::AgentUtterance,
            Event::Latency { .. } => EventKind::Latency,
            Event::Warning { .. } => EventKind::Warning,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionStart,
    UserUtterance,
    Observation,
    Scores,
    Selection,
    Plan,
    ActionStart,
    ActionEnd,
    Status,
    AgentUtterance,
    Latency,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub t_logical_ms: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub event: Event,
}

/// Destination for events produced while a turn runs.
pub trait EventSink {
    fn emit(&mut self, t_logical_ms: u64, event: Event);
}

impl EventSink for Vec<(u64, Event)> {
    fn emit(&mut self, t_logical_ms: u64, event: Event) {
        self.push((t_logical_ms, event));
    }
}
