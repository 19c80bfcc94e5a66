//! Policy execution on the simulated embodiment.
//!
//! Time is logical: each action occupies `[start, start + duration)` on the
//! session clock, with durations given by a [`DurationModel`]. Speech
//! intervals are reserved through the session-wide [`SpeechLock`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::actions::{Action, ActionSpec, ExecutionStatus, Outcome, Policy};
use crate::domain::AgentId;
use crate::world::WorldState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DurationModel {
    pub speak_wps: f64,
    pub speak_min_ms: u64,
    pub gesture_base_ms: BTreeMap<String, u64>,
    pub head_move_ms: u64,
    pub posture_ms: u64,
    pub locomote_ms_per_m: u64,
    pub hand_ms: u64,
}

impl Default for DurationModel {
    fn default() -> Self {
        Self {
            speak_wps: 2.5,
            speak_min_ms: 500,
            gesture_base_ms: [("nod", 800), ("wave", 1500), ("handshake", 2000), ("point", 1000)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            head_move_ms: 600,
            posture_ms: 2000,
            locomote_ms_per_m: 2000,
            hand_ms: 400,
        }
    }
}

impl DurationModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.speak_wps.is_finite() && self.speak_wps > 0.0) {
            return Err("speak_wps must be positive".into());
        }
        let positive = [
            ("speak_min_ms", self.speak_min_ms),
            ("head_move_ms", self.head_move_ms),
            ("posture_ms", self.posture_ms),
            ("locomote_ms_per_m", self.locomote_ms_per_m),
            ("hand_ms", self.hand_ms),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        for g in crate::actions::GESTURES {
            match self.gesture_base_ms.get(*g) {
                Some(ms) if *ms > 0 => {}
                _ => return Err(format!("gesture_base_ms.{g} must be positive")),
            }
        }
        Ok(())
    }

    /// `max(speak_min_ms, round(words / wps * 1000))`
    pub fn speak_ms(&self, text: &str) -> u64 {
        let words = text.split_whitespace().count() as f64;
        let ms = (words / self.speak_wps * 1000.0).round() as u64;
        ms.max(self.speak_min_ms)
    }

    pub fn duration_ms(&self, action: &Action) -> u64 {
        let ms = match action {
            Action::Speak { text, .. } => return self.speak_ms(text),
            Action::Posture { .. } => self.posture_ms,
            Action::Gesture { kind, speed } => {
                let base = self.gesture_base_ms.get(kind).copied().unwrap_or(1000) as f64;
                (base / speed).round() as u64
            }
            Action::HeadMove { .. } => self.head_move_ms,
            Action::Locomote { magnitude, .. } => {
                (magnitude * self.locomote_ms_per_m as f64).round() as u64
            }
            Action::Hand { .. } => self.hand_ms,
        };
        ms.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechInterval {
    pub agent: AgentId,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Session-global speech reservation. A grant never starts before the end
/// of the previous one, so granted intervals are pairwise disjoint.
#[derive(Debug, Clone, Default)]
pub struct SpeechLock {
    busy_until: u64,
    holder: Option<AgentId>,
}

impl SpeechLock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves `[max(earliest_ms, busy_until), +duration_ms)` for `agent`.
    pub fn acquire(&mut self, agent: &AgentId, earliest_ms: u64, duration_ms: u64) -> SpeechInterval {
        let start_ms = earliest_ms.max(self.busy_until);
        let end_ms = start_ms + duration_ms;
        self.busy_until = end_ms;
        self.holder = Some(agent.clone());
        SpeechInterval {
            agent: agent.clone(),
            start_ms,
            end_ms,
        }
    }

    pub fn release(&mut self, agent: &AgentId) {
        if self.holder.as_ref() == Some(agent) {
            self.holder = None;
        }
    }

    pub fn holder(&self) -> Option<&AgentId> {
        self.holder.as_ref()
    }

    pub fn busy_until(&self) -> u64 {
        self.busy_until
    }
}

/// Progress notifications from [`Executor::execute_policy`].
#[derive(Debug)]
pub enum ExecStep<'a> {
    Started {
        index: usize,
        spec: &'a ActionSpec,
        start_ms: u64,
    },
    Finished {
        index: usize,
        spec: &'a ActionSpec,
        status: &'a ExecutionStatus,
        world: &'a WorldState,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Executor {
    pub durations: DurationModel,
    /// Abort the remainder of a policy after the first failure.
    #[serde(default)]
    pub strict: bool,
}

impl Executor {
    pub fn new(durations: DurationModel) -> Self {
        Self {
            durations,
            strict: false,
        }
    }

    /// Executes one action starting at `clock_ms`. World errors and invalid
    /// specs become `Failure` statuses with zero duration and no mutation.
    pub fn execute_action(
        &self,
        world: &mut WorldState,
        agent: &AgentId,
        index: usize,
        spec: &ActionSpec,
        clock_ms: u64,
    ) -> ExecutionStatus {
        let failure = |detail: String| ExecutionStatus {
            action_index: index,
            outcome: Outcome::Failure,
            detail,
            start_ms: clock_ms,
            duration_ms: 0,
        };
        let action = match spec.to_action() {
            Ok(a) => a,
            Err(e) => return failure(e.to_string()),
        };
        if let Err(e) = world.body(agent) {
            return failure(e.to_string());
        }
        let applied = match &action {
            Action::Speak { .. } => Ok(()),
            Action::HeadMove { pan_deg, tilt_deg } => world.apply_head_move(agent, *pan_deg, *tilt_deg),
            Action::Locomote {
                direction,
                magnitude,
            } => world.apply_locomotion(agent, *direction, *magnitude),
            Action::Posture { pose } => {
                world.body_mut(agent).map(|b| b.posture = pose.clone())
            }
            Action::Gesture { kind, .. } => {
                world.body_mut(agent).map(|b| b.last_gesture = Some(kind.clone()))
            }
            Action::Hand { state } => world.body_mut(agent).map(|b| b.hand = state.clone()),
        };
        if let Err(e) = applied {
            return failure(e.to_string());
        }
        let duration_ms = self.durations.duration_ms(&action);
        world.advance_clock(clock_ms + duration_ms);
        ExecutionStatus {
            action_index: index,
            outcome: Outcome::Success,
            detail: describe(&action),
            start_ms: clock_ms,
            duration_ms,
        }
    }

    /// Runs `policy` in order from `clock_ms`, continuing past failures
    /// unless `strict`. Returns one status per action.
    pub fn execute_policy(
        &self,
        world: &mut WorldState,
        agent: &AgentId,
        policy: &Policy,
        clock_ms: u64,
        lock: &mut SpeechLock,
        mut on_step: impl FnMut(ExecStep<'_>),
    ) -> Vec<ExecutionStatus> {
        let mut clock = clock_ms;
        let mut statuses = Vec::with_capacity(policy.len());
        let mut aborted = false;
        for (index, spec) in policy.actions.iter().enumerate() {
            if aborted {
                let status = ExecutionStatus {
                    action_index: index,
                    outcome: Outcome::Failure,
                    detail: "skipped after earlier failure (strict mode)".into(),
                    start_ms: clock,
                    duration_ms: 0,
                };
                on_step(ExecStep::Started {
                    index,
                    spec,
                    start_ms: clock,
                });
                on_step(ExecStep::Finished {
                    index,
                    spec,
                    status: &status,
                    world,
                });
                statuses.push(status);
                continue;
            }

            let speech = match spec.to_action() {
                Ok(Action::Speak { text, .. }) if world.body(agent).is_ok() => {
                    let grant = lock.acquire(agent, clock, self.durations.speak_ms(&text));
                    clock = grant.start_ms;
                    true
                }
                _ => false,
            };
            on_step(ExecStep::Started {
                index,
                spec,
                start_ms: clock,
            });
            let status = self.execute_action(world, agent, index, spec, clock);
            if speech {
                lock.release(agent);
            }
            clock = status.start_ms + status.duration_ms;
            on_step(ExecStep::Finished {
                index,
                spec,
                status: &status,
                world,
            });
            if status.outcome == Outcome::Failure && self.strict {
                aborted = true;
            }
            statuses.push(status);
        }
        statuses
    }
}

fn describe(action: &Action) -> String {
    match action {
        Action::Speak { text, .. } => format!("said {text:?}"),
        Action::Posture { pose } => format!("posture {pose}"),
        Action::Gesture { kind, speed } => format!("gesture {kind} at speed {speed}"),
        Action::HeadMove { pan_deg, tilt_deg } => format!("head pan {pan_deg}° tilt {tilt_deg}°"),
        Action::Locomote {
            direction,
            magnitude,
        } => format!("moved {} {magnitude} m", direction.as_str()),
        Action::Hand { state } => format!("hand {state}"),
    }
}
