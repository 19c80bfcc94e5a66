//! Deterministic runtime for a human talking to a group of embodied agents
//! in a simulated room.
//!
//! A turn starts with a human utterance. Every agent perceives the world,
//! a scorer rates how relevant each agent is to the conversation, the
//! arbitration rule picks responders, and each responder plans a short
//! policy of primitive actions through a completion backend which is then
//! executed against the world. Everything is recorded in an event log that
//! can be replayed.

pub mod actions;
pub mod adapters;
pub mod coordinator;
pub mod domain;
pub mod events;
pub mod executor;
pub mod jsonscan;
pub mod perception;
pub mod planner;
pub mod runtime;
pub mod world;

pub use actions::{ActionSpec, ExecutionStatus, Outcome, Policy, PrimitiveKind};
pub use adapters::{CompletionBackend, CompletionRequest, Purpose, Reply};
pub use coordinator::{select_responders, FallbackMode, ScoreVector, SelectionResult};
pub use domain::{AgentId, AgentProfile, InteractionContext, Speaker, TurnRecord, Utterance};
pub use events::{Event, EventKind, EventRecord};
pub use runtime::{Session, SessionConfig, SessionHandle};
pub use world::{Pose2D, WorldState};
