//! Centralized turn-taking arbitration and the per-turn pipeline.
//!
//! One scoring call rates every agent; agents at or above the threshold
//! respond one after another in descending score order (ties by
//! registration order). A human naming an agent bypasses scoring entirely.
//! Selected agents plan and act strictly sequentially, and every Speak
//! interval is reserved through the session's speech lock, so no two agents
//! ever talk at once.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::actions::{Action, Outcome};
use crate::adapters::{invoke, BackendKind, CallRecord, CompletionBackend, CompletionRequest, Purpose};
use crate::domain::{AgentId, AgentProfile, DomainError, InteractionContext, Speaker, TurnRecord, Utterance};
use crate::events::{Event, EventSink};
use crate::executor::{ExecStep, Executor, SpeechLock};
use crate::jsonscan::{first_object_with_key, Extracted};
use crate::perception::{observe, Observation, Perceived};
use crate::planner::{plan, PlannerConfig};
use crate::world::WorldState;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Scripted,
    ModelBacked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: BTreeMap<AgentId, f64>,
    pub source: ScoreSource,
    /// Set when the scorer failed and uniform scores were substituted.
    #[serde(default)]
    pub degraded: bool,
}

impl ScoreVector {
    /// Builds a vector over `roster`, clipping to [0, 1] and defaulting
    /// missing agents to zero.
    pub fn from_scores(roster: &[AgentProfile], raw: &BTreeMap<AgentId, f64>, source: ScoreSource) -> Self {
        let scores = roster
            .iter()
            .map(|p| {
                let s = raw.get(&p.id).copied().unwrap_or(0.0);
                (p.id.clone(), clip_score(s))
            })
            .collect();
        Self {
            scores,
            source,
            degraded: false,
        }
    }

    pub fn get(&self, agent: &AgentId) -> f64 {
        self.scores.get(agent).copied().unwrap_or(0.0)
    }
}

fn clip_score(s: f64) -> f64 {
    if s.is_nan() {
        0.0
    } else {
        s.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionReason {
    Threshold,
    AddresseeOverride,
    ArgmaxFallback,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<AgentId>,
    pub reason: SelectionReason,
}

/// What to do when nobody reaches the threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackMode {
    #[default]
    Argmax,
    Silence,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("addressee {0} is not in the roster")]
    UnknownAddressee(AgentId),
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
}

/// Case-insensitive prefix match of `name` at the start of `text`, followed
/// by a non-word character or the end of the text.
fn names_at_start(text: &str, name: &str) -> bool {
    let mut text_chars = text.chars();
    for n in name.chars() {
        match text_chars.next() {
            Some(t) if t.to_lowercase().eq(n.to_lowercase()) => {}
            _ => return false,
        }
    }
    match text_chars.next() {
        None => true,
        Some(c) => !(c.is_alphanumeric() || c == '\'' || c == '’' || c == '_'),
    }
}

/// The agent the utterance is directed at: the structural addressee if set,
/// otherwise the agent whose display name opens the text.
pub fn resolve_addressee(u: &Utterance, roster: &[AgentProfile]) -> Option<AgentId> {
    if let Some(a) = &u.addressee {
        return Some(a.clone());
    }
    let text = u.text.trim_start();
    roster
        .iter()
        .filter(|p| !p.display_name.trim().is_empty() && names_at_start(text, p.display_name.trim()))
        .max_by_key(|p| (p.display_name.trim().chars().count(), std::cmp::Reverse(p.registration_index)))
        .map(|p| p.id.clone())
}

/// Threshold selection with addressee override and empty-set fallback.
pub fn select_responders(
    v: &ScoreVector,
    threshold: f64,
    addressee: Option<&AgentId>,
    roster: &[AgentProfile],
    fallback: FallbackMode,
) -> Result<SelectionResult, SelectionError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(SelectionError::BadThreshold(threshold));
    }
    if let Some(a) = addressee {
        if !roster.iter().any(|p| &p.id == a) {
            return Err(SelectionError::UnknownAddressee(a.clone()));
        }
        return Ok(SelectionResult {
            selected: vec![a.clone()],
            reason: SelectionReason::AddresseeOverride,
        });
    }

    let mut ranked: Vec<(&AgentProfile, f64)> = roster.iter().map(|p| (p, v.get(&p.id))).collect();
    ranked.sort_by(|(pa, sa), (pb, sb)| {
        sb.total_cmp(sa)
            .then_with(|| pa.registration_index.cmp(&pb.registration_index))
    });

    let selected: Vec<AgentId> = ranked
        .iter()
        .filter(|(_, s)| *s >= threshold)
        .map(|(p, _)| p.id.clone())
        .collect();
    if !selected.is_empty() {
        return Ok(SelectionResult {
            selected,
            reason: SelectionReason::Threshold,
        });
    }
    Ok(match (fallback, ranked.first()) {
        (FallbackMode::Argmax, Some((top, _))) => SelectionResult {
            selected: vec![top.id.clone()],
            reason: SelectionReason::ArgmaxFallback,
        },
        _ => SelectionResult {
            selected: vec![],
            reason: SelectionReason::None,
        },
    })
}

const SCORER_SYSTEM: &str = "You coordinate turn-taking among robots talking with one human user. \
For every robot, rate how appropriate it is for that robot to respond now, from 0 (should stay \
silent) to 1 (should certainly respond). Reply with exactly one object of the form \
{\"scores\":{\"<agent_id>\":<number>}} and nothing else.";

pub fn scoring_request(
    ctx: &InteractionContext,
    observations: &BTreeMap<AgentId, Observation>,
    roster: &[AgentProfile],
    context_window: usize,
) -> CompletionRequest {
    let agents = roster
        .iter()
        .map(|p| {
            let digest = observations
                .get(&p.id)
                .map(Observation::digest)
                .unwrap_or_else(|| "no observation".into());
            format!("- {} ({}): {digest}", p.id, p.display_name)
        })
        .collect::<Vec<_>>()
        .join("\n");
    let user = format!(
        "Conversation so far:\n{}\n\nRobots:\n{agents}",
        ctx.render(context_window)
    );
    CompletionRequest::new(Purpose::Score, SCORER_SYSTEM, user)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    pub vector: ScoreVector,
    pub call: CallRecord,
    pub warning: Option<String>,
}

/// Asks `scorer` for response likelihoods. Never fails: an unusable reply
/// yields uniform 0.5 scores marked as degraded.
pub fn score_agents(
    ctx: &InteractionContext,
    observations: &BTreeMap<AgentId, Observation>,
    roster: &[AgentProfile],
    scorer: &dyn CompletionBackend,
    context_window: usize,
) -> ScoreOutcome {
    let source = match scorer.kind() {
        BackendKind::Scripted => ScoreSource::Scripted,
        BackendKind::Http => ScoreSource::ModelBacked,
    };
    let call = invoke(scorer, &scoring_request(ctx, observations, roster, context_window));
    let parsed = match &call.result {
        Ok(text) => parse_scores(text, roster),
        Err(e) => Err(format!("scorer failed: {e}")),
    };
    match parsed {
        Ok((raw, notes)) => ScoreOutcome {
            vector: ScoreVector::from_scores(roster, &raw, source),
            call,
            warning: (!notes.is_empty()).then(|| notes.join("; ")),
        },
        Err(reason) => {
            let uniform = roster.iter().map(|p| (p.id.clone(), 0.5)).collect();
            log::warn!("{reason}; using uniform scores");
            ScoreOutcome {
                vector: ScoreVector {
                    scores: uniform,
                    source,
                    degraded: true,
                },
                call,
                warning: Some(format!("{reason}; using uniform 0.5 scores")),
            }
        }
    }
}

type ParsedScores = (BTreeMap<AgentId, f64>, Vec<String>);

fn parse_scores(text: &str, roster: &[AgentProfile]) -> Result<ParsedScores, String> {
    let map = match first_object_with_key(text, "scores") {
        Extracted::Found(map) => map,
        _ => return Err("scorer reply has no {\"scores\":...} object".into()),
    };
    let Some(Value::Object(scores)) = map.get("scores") else {
        return Err("\"scores\" is not an object".into());
    };
    let mut notes = Vec::new();
    let mut out = BTreeMap::new();
    for (key, value) in scores {
        let Some(profile) = roster.iter().find(|p| p.id.as_str() == key) else {
            notes.push(format!("ignored score for unknown agent {key:?}"));
            continue;
        };
        match value.as_f64() {
            Some(s) => {
                out.insert(profile.id.clone(), s);
            }
            None => notes.push(format!("non-numeric score for {key}")),
        }
    }
    Ok((out, notes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationSettings {
    pub threshold: f64,
    pub fallback: FallbackMode,
}

impl Default for ArbitrationSettings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            fallback: FallbackMode::Argmax,
        }
    }
}

/// Adapters used by a session, all behind the same completion contract.
#[derive(Clone)]
pub struct Backends {
    pub planner: Arc<dyn CompletionBackend>,
    pub scorer: Arc<dyn CompletionBackend>,
    pub scene: Option<Arc<dyn CompletionBackend>>,
}

/// Mutable state threaded through turns.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub world: WorldState,
    pub context: InteractionContext,
    pub lock: SpeechLock,
    pub turns: u64,
}

impl SessionState {
    pub fn new(world: WorldState) -> Self {
        Self {
            world,
            context: InteractionContext::new(),
            lock: SpeechLock::new(),
            turns: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TurnError {
    #[error("turns are triggered by human utterances only")]
    NotHuman,
    #[error(transparent)]
    Context(#[from] DomainError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

/// Immutable per-session machinery that runs turns over a [`SessionState`].
pub struct TurnEngine {
    pub roster: Vec<AgentProfile>,
    pub manifests: BTreeMap<AgentId, String>,
    pub arbitration: ArbitrationSettings,
    pub planner: PlannerConfig,
    pub executor: Executor,
    pub backends: Backends,
}

impl TurnEngine {
    pub fn new(
        roster: Vec<AgentProfile>,
        arbitration: ArbitrationSettings,
        planner: PlannerConfig,
        executor: Executor,
        backends: Backends,
    ) -> Self {
        let manifests = roster
            .iter()
            .map(|p| (p.id.clone(), crate::actions::capability_manifest(p).text))
            .collect();
        Self {
            roster,
            manifests,
            arbitration,
            planner,
            executor,
            backends,
        }
    }

    fn profile(&self, id: &AgentId) -> Option<&AgentProfile> {
        self.roster.iter().find(|p| &p.id == id)
    }

    fn observe_all(&self, world: &WorldState, trigger: &Utterance) -> Vec<Perceived> {
        let scene = self.backends.scene.as_deref();
        let observe_one = |p: &AgentProfile| {
            observe(world, &p.id, Some(trigger), scene).expect("roster agents exist in the world")
        };
        let width = scene.map(|s| s.max_concurrency()).unwrap_or(1).max(1);
        if scene.is_none() || width == 1 {
            return self.roster.iter().map(observe_one).collect();
        }
        let mut out = Vec::with_capacity(self.roster.len());
        for chunk in self.roster.chunks(width) {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|p| s.spawn(move || observe_one(p))).collect();
                out.extend(handles.into_iter().map(|h| h.join().expect("observe thread")));
            });
        }
        out
    }

    /// Runs the full pipeline for one human utterance: record it, observe,
    /// arbitrate, then plan and execute each selected agent in order.
    pub fn run_turn(
        &self,
        state: &mut SessionState,
        trigger: Utterance,
        sink: &mut dyn EventSink,
    ) -> Result<TurnRecord, TurnError> {
        if trigger.speaker != Speaker::Human {
            return Err(TurnError::NotHuman);
        }
        if let Some(a) = &trigger.addressee {
            if self.profile(a).is_none() {
                return Err(SelectionError::UnknownAddressee(a.clone()).into());
            }
        }
        state.context.append(trigger.clone())?;
        let turn_index = state.turns;
        state.turns += 1;
        let t0 = state.world.clock_ms;
        sink.emit(
            t0,
            Event::UserUtterance {
                turn_index,
                utterance: trigger.clone(),
            },
        );

        let mut stage = BTreeMap::from([
            ("perceive".to_string(), 0u64),
            ("score".to_string(), 0),
            ("plan".to_string(), 0),
            ("execute".to_string(), 0),
        ]);
        let latency = |sink: &mut dyn EventSink, t: u64, agent: Option<&AgentId>, call: &CallRecord| {
            sink.emit(
                t,
                Event::Latency {
                    turn_index: Some(turn_index),
                    purpose: call.purpose,
                    agent: agent.cloned(),
                    latency_ms: call.latency_ms,
                    ok: call.ok(),
                },
            );
        };
        let warn = |sink: &mut dyn EventSink, t: u64, agent: Option<&AgentId>, message: String| {
            sink.emit(
                t,
                Event::Warning {
                    turn_index: Some(turn_index),
                    agent: agent.cloned(),
                    message,
                },
            );
        };

        // Perceive.
        let mut observations = BTreeMap::new();
        for perceived in self.observe_all(&state.world, &trigger) {
            let agent = perceived.observation.agent.clone();
            if let Some(call) = &perceived.call {
                *stage.get_mut("perceive").unwrap() += call.latency_ms;
                latency(sink, t0, Some(&agent), call);
            }
            if let Some(w) = perceived.warning {
                warn(sink, t0, Some(&agent), w);
            }
            sink.emit(
                t0,
                Event::Observation {
                    turn_index,
                    observation: Box::new(perceived.observation.clone()),
                },
            );
            observations.insert(agent, perceived.observation);
        }

        // Arbitrate.
        let addressee = resolve_addressee(&trigger, &self.roster);
        let mut scores = ScoreVector {
            scores: BTreeMap::new(),
            source: ScoreSource::Scripted,
            degraded: false,
        };
        if addressee.is_none() {
            let outcome = score_agents(
                &state.context,
                &observations,
                &self.roster,
                self.backends.scorer.as_ref(),
                self.planner.context_window,
            );
            *stage.get_mut("score").unwrap() += outcome.call.latency_ms;
            latency(sink, t0, None, &outcome.call);
            if let Some(w) = outcome.warning {
                warn(sink, t0, None, w);
            }
            sink.emit(
                t0,
                Event::Scores {
                    turn_index,
                    scores: outcome.vector.clone(),
                },
            );
            scores = outcome.vector;
        }
        let selection = select_responders(
            &scores,
            self.arbitration.threshold,
            addressee.as_ref(),
            &self.roster,
            self.arbitration.fallback,
        )?;
        sink.emit(
            t0,
            Event::Selection {
                turn_index,
                addressee: addressee.clone(),
                selection: selection.clone(),
            },
        );

        // Plan and act, one agent at a time.
        let mut policies = BTreeMap::new();
        let mut statuses = BTreeMap::new();
        for agent in &selection.selected {
            let profile = self.profile(agent).expect("selection is within roster");
            let obs = &observations[agent];
            let outcome = plan(
                profile,
                obs,
                &state.context,
                &self.manifests[agent],
                self.backends.planner.as_ref(),
                &self.planner,
            );
            let t_plan = state.world.clock_ms;
            for call in &outcome.calls {
                *stage.get_mut("plan").unwrap() += call.latency_ms;
                latency(sink, t_plan, Some(agent), call);
            }
            if outcome.fallback_used {
                warn(
                    sink,
                    t_plan,
                    Some(agent),
                    format!(
                        "planning fell back after {} attempts: {}",
                        outcome.attempts,
                        outcome.errors.join(" | ")
                    ),
                );
            }
            sink.emit(
                t_plan,
                Event::Plan {
                    turn_index,
                    agent: agent.clone(),
                    policy: outcome.policy.clone(),
                    attempts: outcome.attempts,
                    fallback_used: outcome.fallback_used,
                },
            );

            let exec_start = state.world.clock_ms;
            let agent_statuses = self.executor.execute_policy(
                &mut state.world,
                agent,
                &outcome.policy,
                exec_start,
                &mut state.lock,
                |step| match step {
                    ExecStep::Started {
                        index,
                        spec,
                        start_ms,
                    } => sink.emit(
                        start_ms,
                        Event::ActionStart {
                            turn_index,
                            agent: agent.clone(),
                            action_index: index,
                            spec: spec.clone(),
                            start_ms,
                        },
                    ),
                    ExecStep::Finished {
                        index,
                        spec,
                        status,
                        world,
                    } => {
                        let end_ms = status.start_ms + status.duration_ms;
                        sink.emit(
                            end_ms,
                            Event::ActionEnd {
                                turn_index,
                                agent: agent.clone(),
                                action_index: index,
                                action: spec.kind,
                                outcome: status.outcome,
                                end_ms,
                                body: world.agents[agent].clone(),
                            },
                        );
                        sink.emit(
                            end_ms,
                            Event::Status {
                                turn_index,
                                agent: agent.clone(),
                                status: status.clone(),
                            },
                        );
                    }
                },
            );
            *stage.get_mut("execute").unwrap() += state.world.clock_ms - exec_start;

            // Successful speech becomes part of the shared context before the
            // next responder plans.
            for (spec, status) in outcome.policy.actions.iter().zip(&agent_statuses) {
                if status.outcome != Outcome::Success {
                    continue;
                }
                if let Ok(Action::Speak { text, .. }) = spec.to_action() {
                    let u = Utterance::agent(agent.clone(), text, status.start_ms);
                    state.context.append(u.clone())?;
                    sink.emit(
                        state.world.clock_ms,
                        Event::AgentUtterance {
                            turn_index,
                            utterance: u,
                        },
                    );
                }
            }
            policies.insert(agent.clone(), outcome.policy);
            statuses.insert(agent.clone(), agent_statuses);
        }

        Ok(TurnRecord {
            turn_index,
            trigger,
            observations,
            scores: scores.scores,
            selected: selection.selected,
            policies,
            statuses,
            stage_latencies_ms: stage,
        })
    }
}
