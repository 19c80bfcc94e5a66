//! Shared vocabulary: agent identity, utterances, the interaction context
//! (conversational history) and the per-turn record.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{ExecutionStatus, Policy};
use crate::perception::Observation;

/// Default number of transcript lines rendered into prompts.
pub const DEFAULT_CONTEXT_WINDOW: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("invalid agent id {0:?}: expected [a-z][a-z0-9_]{{0,31}}")]
    InvalidAgentId(String),
    #[error("utterance text is empty")]
    EmptyUtterance,
    #[error("time regression: utterance at {got} ms precedes last entry at {last} ms")]
    TimeRegression { last: u64, got: u64 },
}

/// Short lowercase identifier of an agent, e.g. `sam` or `journey`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgentId(String);

impl AgentId {
    pub fn new(value: impl Into<String>) -> Result<Self, DomainError> {
        let value = value.into();
        if is_valid_agent_id(&value) {
            Ok(Self(value))
        } else {
            Err(DomainError::InvalidAgentId(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn is_valid_agent_id(s: &str) -> bool {
    let bytes = s.as_bytes();
    match bytes.split_first() {
        Some((first, rest)) => {
            first.is_ascii_lowercase()
                && rest.len() <= 31
                && rest
                    .iter()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
        }
        None => false,
    }
}

impl TryFrom<String> for AgentId {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        AgentId::new(value)
    }
}

impl From<AgentId> for String {
    fn from(id: AgentId) -> Self {
        id.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for AgentId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: AgentId,
    pub display_name: String,
    pub persona: String,
    /// Position in the roster, dense from zero. Used for tie-breaking.
    pub registration_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Human,
    Agent(AgentId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addressee: Option<AgentId>,
    pub logical_time_ms: u64,
}

impl Utterance {
    pub fn human(text: impl Into<String>, logical_time_ms: u64) -> Self {
        Self {
            speaker: Speaker::Human,
            text: text.into(),
            addressee: None,
            logical_time_ms,
        }
    }

    pub fn agent(agent: AgentId, text: impl Into<String>, logical_time_ms: u64) -> Self {
        Self {
            speaker: Speaker::Agent(agent),
            text: text.into(),
            addressee: None,
            logical_time_ms,
        }
    }

    pub fn addressed_to(mut self, addressee: AgentId) -> Self {
        self.addressee = Some(addressee);
        self
    }

    pub fn is_human(&self) -> bool {
        matches!(self.speaker, Speaker::Human)
    }

    /// `SPEAKER[→addressee]: text`
    pub fn render_line(&self) -> String {
        let speaker = match &self.speaker {
            Speaker::Human => "HUMAN".to_string(),
            Speaker::Agent(id) => id.as_str().to_ascii_uppercase(),
        };
        match &self.addressee {
            Some(to) => format!("{speaker}→{to}: {}", self.text),
            None => format!("{speaker}: {}", self.text),
        }
    }
}

/// Conversational history shared by every agent of a session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionContext {
    transcript: Vec<Utterance>,
    turn_counter: u64,
}

impl InteractionContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn transcript(&self) -> &[Utterance] {
        &self.transcript
    }

    pub fn turn_counter(&self) -> u64 {
        self.turn_counter
    }

    pub fn len(&self) -> usize {
        self.transcript.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transcript.is_empty()
    }

    pub fn last_time_ms(&self) -> Option<u64> {
        self.transcript.last().map(|u| u.logical_time_ms)
    }

    /// Appends in place. Fails on empty text or if `u` is older than the
    /// newest transcript entry.
    pub fn append(&mut self, u: Utterance) -> Result<(), DomainError> {
        if u.text.trim().is_empty() {
            return Err(DomainError::EmptyUtterance);
        }
        if let Some(last) = self.last_time_ms() {
            if u.logical_time_ms < last {
                return Err(DomainError::TimeRegression {
                    last,
                    got: u.logical_time_ms,
                });
            }
        }
        if u.is_human() {
            self.turn_counter += 1;
        }
        self.transcript.push(u);
        Ok(())
    }

    /// Value-style append: returns the extended context.
    pub fn appended(mut self, u: Utterance) -> Result<Self, DomainError> {
        self.append(u)?;
        Ok(self)
    }

    /// Renders the most recent `max_entries` utterances, oldest first, one per
    /// line. `max_entries` below one is treated as one.
    pub fn render(&self, max_entries: usize) -> String {
        let window = max_entries.max(1).min(self.transcript.len());
        let start = self.transcript.len() - window;
        self.transcript[start..]
            .iter()
            .map(Utterance::render_line)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Everything that happened in one human-triggered turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn_index: u64,
    pub trigger: Utterance,
    pub observations: BTreeMap<AgentId, Observation>,
    pub scores: BTreeMap<AgentId, f64>,
    pub selected: Vec<AgentId>,
    pub policies: BTreeMap<AgentId, Policy>,
    pub statuses: BTreeMap<AgentId, Vec<ExecutionStatus>>,
    pub stage_latencies_ms: BTreeMap<String, u64>,
}
