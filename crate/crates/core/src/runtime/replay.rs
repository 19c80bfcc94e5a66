//! Rebuilds conversation and world state from an event log.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::log::{read_log, LogError};
use super::session::Snapshot;
use crate::actions::{ActionSpec, Outcome};
use crate::domain::{AgentId, InteractionContext};
use crate::events::{Event, EventRecord};

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("cannot read log: {0}")]
    Io(String),
}

fn corrupt(msg: impl Into<String>) -> ReplayError {
    ReplayError::CorruptLog(msg.into())
}

pub fn replay_file(path: &Path) -> Result<Snapshot, ReplayError> {
    let records = read_log(path).map_err(|e| match e {
        LogError::Io(e) => ReplayError::Io(e.to_string()),
        LogError::Schema { line, message } => corrupt(format!("line {line}: {message}")),
    })?;
    replay(&records)
}

/// Re-applies every recorded action to the initial world from
/// `session_start` and checks each step against the recorded outcome.
pub fn replay(records: &[EventRecord]) -> Result<Snapshot, ReplayError> {
    let first = records.first().ok_or_else(|| corrupt("empty log"))?;
    let config = match &first.event {
        Event::SessionStart { config, .. } => config,
        _ => return Err(corrupt("first event is not session_start")),
    };
    config
        .validate()
        .map_err(|e| corrupt(format!("session_start config: {e}")))?;
    let executor = config.executor();
    let mut world = config.initial_world();
    let mut context = InteractionContext::new();
    let mut pending: BTreeMap<(AgentId, usize), (ActionSpec, u64)> = BTreeMap::new();
    let mut last_t = 0;

    for (i, r) in records.iter().enumerate() {
        if r.seq != i as u64 {
            return Err(corrupt(format!("sequence gap: expected {i}, found {}", r.seq)));
        }
        if r.session_id != first.session_id {
            return Err(corrupt(format!("seq {}: session id {:?} differs", r.seq, r.session_id)));
        }
        if r.t_logical_ms < last_t {
            return Err(corrupt(format!("seq {}: logical time went backwards", r.seq)));
        }
        last_t = r.t_logical_ms;
        match &r.event {
            Event::SessionStart { .. } if i > 0 => {
                return Err(corrupt(format!("seq {}: second session_start", r.seq)))
            }
            Event::UserUtterance { utterance, .. } | Event::AgentUtterance { utterance, .. } => {
                context
                    .append(utterance.clone())
                    .map_err(|e| corrupt(format!("seq {}: {e}", r.seq)))?;
            }
            Event::ActionStart {
                agent,
                action_index,
                spec,
                start_ms,
                ..
            } => {
                pending.insert((agent.clone(), *action_index), (spec.clone(), *start_ms));
            }
            Event::ActionEnd {
                agent,
                action_index,
                outcome,
                end_ms,
                body,
                ..
            } => {
                let (spec, start_ms) = pending
                    .remove(&(agent.clone(), *action_index))
                    .ok_or_else(|| corrupt(format!("seq {}: action_end without action_start", r.seq)))?;
                if *outcome == Outcome::Success {
                    let status = executor.execute_action(&mut world, agent, *action_index, &spec, start_ms);
                    if status.outcome != Outcome::Success {
                        return Err(corrupt(format!("seq {}: action fails on replay: {}", r.seq, status.detail)));
                    }
                    if status.start_ms + status.duration_ms != *end_ms {
                        return Err(corrupt(format!("seq {}: recorded end time disagrees with duration model", r.seq)));
                    }
                }
                let replayed = world
                    .agents
                    .get(agent)
                    .ok_or_else(|| corrupt(format!("seq {}: unknown agent {agent}", r.seq)))?;
                if replayed != body {
                    return Err(corrupt(format!("seq {}: replayed state of {agent} diverges", r.seq)));
                }
            }
            _ => {}
        }
    }
    if !pending.is_empty() {
        return Err(corrupt("log ends inside an action"));
    }
    Ok(Snapshot { context, world })
}
