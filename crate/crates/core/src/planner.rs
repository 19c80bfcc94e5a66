//! Capability-constrained planning: prompt assembly, policy extraction from
//! model output, bounded repair by re-prompting, and a guaranteed fallback.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::actions::{
    validate_action, validate_policy, ActionSpec, ParamValue, Policy, PolicyError, PrimitiveKind,
    ValidationError, DEFAULT_POLICY_CAP, DEFAULT_SPEAK_VOLUME,
};
use crate::adapters::{invoke, CallRecord, CompletionBackend, CompletionRequest, Purpose};
use crate::domain::{AgentProfile, InteractionContext, DEFAULT_CONTEXT_WINDOW};
use crate::jsonscan::{first_object_with_key, Extracted};
use crate::perception::Observation;

pub const FALLBACK_TEXT: &str = "I'm sorry, I didn't catch that — could you repeat?";
pub const DEFAULT_RETRY_CAP: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub retry_cap: u32,
    pub policy_cap: usize,
    pub context_window: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            retry_cap: DEFAULT_RETRY_CAP,
            policy_cap: DEFAULT_POLICY_CAP,
            context_window: DEFAULT_CONTEXT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningPrompt {
    pub system: String,
    pub user: String,
}

/// Assembles the planning prompt. System block: persona, manifest, output
/// contract. User block: context window, self state and scene, heard text.
pub fn build_planning_prompt(
    obs: &Observation,
    ctx: &InteractionContext,
    manifest: &str,
    profile: &AgentProfile,
    cfg: &PlannerConfig,
) -> PlanningPrompt {
    let system = format!(
        "You are {name} (agent id: {id}), one of several robots sharing a room with a human user.\n\
         {persona}\n\
         \n\
         {manifest}\n\
         Output contract: emit exactly one object in the Policy wire format and nothing else:\n\
         {{\"actions\":[{{\"kind\":\"<kind>\",\"params\":{{...}}}}]}}\n\
         Use between 1 and {cap} actions, executed in order. Always include at least one action.",
        name = profile.display_name,
        id = profile.id,
        persona = profile.persona.trim(),
        manifest = manifest.trim_end(),
        cap = cfg.policy_cap,
    );

    let history = if ctx.is_empty() {
        "(no conversation yet)".to_string()
    } else {
        ctx.render(cfg.context_window)
    };
    let pose = obs.self_pose;
    let heard = obs
        .heard
        .as_ref()
        .map(|u| u.text.as_str())
        .unwrap_or("(nothing)");
    let user = format!(
        "Conversation so far:\n{history}\n\
         \n\
         Your state: position ({:.2}, {:.2}) m, heading {:.0}°, head pan {:.0}° tilt {:.0}°, \
         distance to the human {:.1} m.\n\
         What you see: {}\n\
         \n\
         You heard: {heard}",
        pose.x,
        pose.y,
        pose.heading_deg,
        obs.head.pan_deg,
        obs.head.tilt_deg,
        obs.distance_to_human_m,
        obs.scene.text,
    );
    PlanningPrompt { system, user }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object found")]
    NoObjectFound,
    #[error("malformed policy structure: {0}")]
    MalformedStructure(String),
    #[error("{}", match .index {
        Some(i) => format!("action #{i} invalid: {}", .reason),
        None => format!("policy invalid: {}", .reason),
    })]
    ValidationFailed { index: Option<usize>, reason: String },
}

impl ParseError {
    fn at(index: usize, e: ValidationError) -> Self {
        ParseError::ValidationFailed {
            index: Some(index),
            reason: e.to_string(),
        }
    }
}

/// Extracts the first object carrying `actions` from `raw`, fills defaults
/// and validates against the policy cap.
pub fn parse_policy(raw: &str, cap: usize) -> Result<Policy, ParseError> {
    let map = match first_object_with_key(raw, "actions") {
        Extracted::Found(map) => map,
        Extracted::MissingKey => {
            return Err(ParseError::MalformedStructure(
                "no object with an \"actions\" key".into(),
            ))
        }
        Extracted::Nothing => return Err(ParseError::NoObjectFound),
    };
    let entries = map["actions"]
        .as_array()
        .ok_or_else(|| ParseError::MalformedStructure("\"actions\" is not an array".into()))?;

    let mut actions = Vec::with_capacity(entries.len());
    for (index, entry) in entries.iter().enumerate() {
        let mut spec = action_from_json(index, entry)?;
        spec.fill_defaults();
        actions.push(spec);
    }
    let policy = Policy::new(actions);
    match validate_policy(&policy, cap) {
        Ok(()) => Ok(policy),
        Err(PolicyError::InvalidActions(mut failures)) => {
            let (i, e) = failures.remove(0);
            Err(ParseError::at(i, e))
        }
        Err(e) => Err(ParseError::ValidationFailed {
            index: None,
            reason: e.to_string(),
        }),
    }
}

fn action_from_json(index: usize, entry: &Value) -> Result<ActionSpec, ParseError> {
    let obj = entry.as_object().ok_or_else(|| {
        ParseError::MalformedStructure(format!("action #{index} is not an object"))
    })?;
    let kind_name = obj.get("kind").and_then(Value::as_str).ok_or_else(|| {
        ParseError::MalformedStructure(format!("action #{index} has no string \"kind\""))
    })?;
    let kind = PrimitiveKind::parse(kind_name).ok_or_else(|| {
        ParseError::at(
            index,
            ValidationError::UnknownKind {
                kind: kind_name.to_string(),
            },
        )
    })?;
    let mut spec = ActionSpec::new(kind);
    match obj.get("params") {
        None | Some(Value::Null) => {}
        Some(Value::Object(params)) => {
            for (name, value) in params {
                let value = match value {
                    Value::Number(n) => ParamValue::Number(n.as_f64().unwrap_or(f64::NAN)),
                    Value::String(s) => ParamValue::Text(s.clone()),
                    _ => {
                        let expected = kind
                            .schema()
                            .iter()
                            .find(|p| p.name == name.as_str())
                            .map(|p| match p.ty {
                                crate::actions::ParamType::Number { .. } => "number",
                                _ => "string",
                            })
                            .unwrap_or("string or number");
                        return Err(ParseError::at(
                            index,
                            ValidationError::BadType {
                                param: name.clone(),
                                expected: expected.into(),
                            },
                        ));
                    }
                };
                spec.params.insert(name.clone(), value);
            }
        }
        Some(_) => {
            return Err(ParseError::MalformedStructure(format!(
                "action #{index} \"params\" is not an object"
            )))
        }
    }
    if let Err(e) = validate_action(&spec) {
        return Err(ParseError::at(index, e));
    }
    Ok(spec)
}

pub fn fallback_policy() -> Policy {
    Policy::new(vec![ActionSpec::new(PrimitiveKind::Speak)
        .with("text", FALLBACK_TEXT)
        .with("volume", DEFAULT_SPEAK_VOLUME)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    /// Always passes `validate_policy`.
    pub policy: Policy,
    pub attempts: u32,
    pub fallback_used: bool,
    pub raw_last: String,
    /// One record per backend call, in order.
    pub calls: Vec<CallRecord>,
    /// Reason each failed attempt was rejected.
    pub errors: Vec<String>,
}

/// Plans for one agent, calling `backend` up to `1 + retry_cap` times. Never
/// fails: on exhaustion the fallback apology is returned.
pub fn plan(
    profile: &AgentProfile,
    obs: &Observation,
    ctx: &InteractionContext,
    manifest: &str,
    backend: &dyn CompletionBackend,
    cfg: &PlannerConfig,
) -> PlanOutcome {
    let prompt = build_planning_prompt(obs, ctx, manifest, profile, cfg);
    let mut calls = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    let mut raw_last = String::new();

    for attempt in 1..=cfg.retry_cap + 1 {
        let user = match errors.last() {
            None => prompt.user.clone(),
            Some(err) => format!(
                "{}\n\nYour previous reply could not be used ({err}). \
                 Reply again with exactly one object in the Policy wire format.",
                prompt.user
            ),
        };
        let req = CompletionRequest::new(Purpose::Plan, prompt.system.clone(), user);
        let record = invoke(backend, &req);
        let parsed = match &record.result {
            Ok(text) => {
                raw_last = text.clone();
                parse_policy(text, cfg.policy_cap).map_err(|e| e.to_string())
            }
            Err(e) => Err(format!("backend error: {e}")),
        };
        calls.push(record);
        match parsed {
            Ok(policy) => {
                return PlanOutcome {
                    policy,
                    attempts: attempt,
                    fallback_used: false,
                    raw_last,
                    calls,
                    errors,
                }
            }
            Err(e) => errors.push(e),
        }
    }

    log::warn!(
        "planning for {} exhausted {} attempts; using fallback",
        profile.id,
        cfg.retry_cap + 1
    );
    PlanOutcome {
        policy: fallback_policy(),
        attempts: cfg.retry_cap + 1,
        fallback_used: true,
        raw_last,
        calls,
        errors,
    }
}
