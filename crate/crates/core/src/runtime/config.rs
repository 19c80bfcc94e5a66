use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{
    CompletionBackend, EndpointConfig, HttpBackend, Purpose, ScriptFile, ScriptRule, ScriptedBackend,
};
use crate::coordinator::{ArbitrationSettings, Backends, FallbackMode, DEFAULT_THRESHOLD};
use crate::domain::{AgentId, AgentProfile, DEFAULT_CONTEXT_WINDOW};
use crate::executor::{DurationModel, Executor};
use crate::planner::{PlannerConfig, DEFAULT_RETRY_CAP};
use crate::actions::DEFAULT_POLICY_CAP;
use crate::world::{AgentBody, Bounds, Entity, FieldOfView, HeadPose, Pose2D, WorldState, HUMAN_ID};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config: {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub display_name: String,
    #[serde(default)]
    pub persona: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPlacement {
    pub pose: Pose2D,
    #[serde(default)]
    pub head: HeadPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldLayout {
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default)]
    pub fov: FieldOfView,
    pub human: Pose2D,
    pub agents: BTreeMap<AgentId, AgentPlacement>,
    #[serde(default)]
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Scripted {
        /// Rules file, resolved relative to the scenario file and inlined
        /// into `rules` on load.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        script: Option<PathBuf>,
        #[serde(default)]
        rules: Vec<ScriptRule>,
    },
    Http {
        endpoint: EndpointConfig,
    },
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_retry_cap() -> u32 {
    DEFAULT_RETRY_CAP
}
fn default_policy_cap() -> usize {
    DEFAULT_POLICY_CAP
}
fn default_context_window() -> usize {
    DEFAULT_CONTEXT_WINDOW
}
fn default_time_dilation() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub roster: Vec<AgentSpec>,
    pub world: WorldLayout,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub fallback: FallbackMode,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: u32,
    #[serde(default = "default_policy_cap")]
    pub policy_cap: usize,
    #[serde(default = "default_context_window")]
    pub context_window: usize,
    #[serde(default)]
    pub durations: DurationModel,
    #[serde(default)]
    pub strict_execution: bool,
    pub backend: BackendConfig,
    /// Route scene descriptions through the backend instead of the
    /// built-in template.
    #[serde(default)]
    pub scene_adapter: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_time_dilation")]
    pub time_dilation: f64,
}

impl SessionConfig {
    /// Loads a referenced script file (relative to `base_dir`) and inlines
    /// its rules ahead of any inline rules.
    pub fn inline_script(&mut self, base_dir: &Path) -> Result<(), ConfigError> {
        if let BackendConfig::Scripted { script, rules } = &mut self.backend {
            if let Some(path) = script.take() {
                let full = if path.is_absolute() { path } else { base_dir.join(path) };
                let file = ScriptFile::load(&full)
                    .map_err(|e| ConfigError::new("backend.script", e.to_string()))?;
                let inline = std::mem::take(rules);
                *rules = file.rules.into_iter().chain(inline).collect();
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.roster.is_empty() {
            return Err(ConfigError::new("roster", "at least one agent is required"));
        }
        let mut ids = BTreeSet::new();
        for (i, a) in self.roster.iter().enumerate() {
            if !ids.insert(a.id.clone()) {
                return Err(ConfigError::new(format!("roster[{i}].id"), format!("duplicate id {}", a.id)));
            }
            if a.display_name.trim().is_empty() {
                return Err(ConfigError::new(format!("roster[{i}].display_name"), "must be non-empty"));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::new("threshold", format!("{} outside [0, 1]", self.threshold)));
        }
        if self.policy_cap == 0 {
            return Err(ConfigError::new("policy_cap", "must be at least 1"));
        }
        if self.context_window == 0 {
            return Err(ConfigError::new("context_window", "must be at least 1"));
        }
        if !(self.time_dilation.is_finite() && self.time_dilation >= 0.0) {
            return Err(ConfigError::new("time_dilation", "must be a non-negative number"));
        }
        self.durations
            .validate()
            .map_err(|m| ConfigError::new("durations", m))?;
        self.validate_world(&ids)
    }

    fn validate_world(&self, roster: &BTreeSet<AgentId>) -> Result<(), ConfigError> {
        let w = &self.world;
        let b = w.bounds;
        if !(b.min_x < b.max_x && b.min_y < b.max_y) {
            return Err(ConfigError::new("world.bounds", "min must be below max"));
        }
        if !(w.fov.half_angle_deg > 0.0 && w.fov.half_angle_deg <= 180.0 && w.fov.range_m > 0.0) {
            return Err(ConfigError::new("world.fov", "half angle must be in (0, 180] and range positive"));
        }
        let placed: BTreeSet<AgentId> = w.agents.keys().cloned().collect();
        if let Some(missing) = roster.difference(&placed).next() {
            return Err(ConfigError::new(format!("world.agents.{missing}"), "roster agent has no placement"));
        }
        if let Some(extra) = placed.difference(roster).next() {
            return Err(ConfigError::new(format!("world.agents.{extra}"), "placement for agent not in roster"));
        }
        if !b.contains(&w.human) {
            return Err(ConfigError::new("world.human", "outside bounds"));
        }
        for (id, p) in &w.agents {
            if !b.contains(&p.pose) {
                return Err(ConfigError::new(format!("world.agents.{id}.pose"), "outside bounds"));
            }
            HeadPose::new(p.head.pan_deg, p.head.tilt_deg)
                .map_err(|e| ConfigError::new(format!("world.agents.{id}.head"), e.to_string()))?;
        }
        let mut entity_ids = BTreeSet::new();
        for (i, e) in w.entities.iter().enumerate() {
            if e.id == HUMAN_ID || !entity_ids.insert(e.id.as_str()) {
                return Err(ConfigError::new(format!("world.entities[{i}].id"), format!("duplicate or reserved id {:?}", e.id)));
            }
        }
        Ok(())
    }

    pub fn profiles(&self) -> Vec<AgentProfile> {
        self.roster
            .iter()
            .enumerate()
            .map(|(i, a)| AgentProfile {
                id: a.id.clone(),
                display_name: a.display_name.clone(),
                persona: a.persona.clone(),
                registration_index: i,
            })
            .collect()
    }

    pub fn initial_world(&self) -> WorldState {
        let w = &self.world;
        WorldState {
            bounds: w.bounds,
            fov: w.fov,
            agents: w
                .agents
                .iter()
                .map(|(id, p)| {
                    let mut body = AgentBody::at(Pose2D::new(p.pose.x, p.pose.y, p.pose.heading_deg));
                    body.head = p.head;
                    (id.clone(), body)
                })
                .collect(),
            human: Pose2D::new(w.human.x, w.human.y, w.human.heading_deg),
            entities: w.entities.clone(),
            clock_ms: 0,
        }
    }

    pub fn arbitration(&self) -> ArbitrationSettings {
        ArbitrationSettings {
            threshold: self.threshold,
            fallback: self.fallback,
        }
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            retry_cap: self.retry_cap,
            policy_cap: self.policy_cap,
            context_window: self.context_window,
        }
    }

    pub fn executor(&self) -> Executor {
        Executor {
            durations: self.durations.clone(),
            strict: self.strict_execution,
        }
    }

    pub fn backends(&self) -> Result<Backends, ConfigError> {
        let backend: Arc<dyn CompletionBackend> = match &self.backend {
            BackendConfig::Scripted { script: Some(_), .. } => {
                return Err(ConfigError::new("backend.script", "script file was not inlined"))
            }
            BackendConfig::Scripted { rules, .. } => {
                let mut required = vec![Purpose::Plan, Purpose::Score];
                if self.scene_adapter {
                    required.push(Purpose::Scene);
                }
                Arc::new(
                    ScriptedBackend::new(rules.clone(), &required)
                        .map_err(|e| ConfigError::new("backend.rules", e.to_string()))?,
                )
            }
            BackendConfig::Http { endpoint } => {
                if endpoint.base_url.trim().is_empty() {
                    return Err(ConfigError::new("backend.endpoint.base_url", "must be set"));
                }
                Arc::new(HttpBackend::new(endpoint.clone()))
            }
        };
        Ok(Backends {
            planner: backend.clone(),
            scorer: backend.clone(),
            scene: self.scene_adapter.then_some(backend),
        })
    }
}
