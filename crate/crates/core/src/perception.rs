//! Per-agent observation: the latest heard utterance fused with a textual
//! description of what the agent's camera currently sees.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::adapters::{invoke, CallRecord, CompletionBackend, CompletionRequest, Purpose};
use crate::domain::{AgentId, Utterance};
use crate::world::{HeadPose, Pose2D, WorldError, WorldState};

pub const NOTHING_VISIBLE: &str = "You see nothing notable.";
pub const MAX_SCENE_CHARS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSource {
    SimTemplate,
    ExternalAdapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub text: String,
    pub visible_ids: Vec<String>,
    pub generated_by: SceneSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub agent: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heard: Option<Utterance>,
    pub scene: SceneDescription,
    pub self_pose: Pose2D,
    pub head: HeadPose,
    pub distance_to_human_m: f64,
    pub clock_ms: u64,
}

impl Observation {
    /// One-line summary used by the turn-taking scorer.
    pub fn digest(&self) -> String {
        let sees = if self.scene.visible_ids.is_empty() {
            "nothing".to_string()
        } else {
            self.scene.visible_ids.join(", ")
        };
        format!(
            "distance to human {:.1} m; sees: {sees}",
            self.distance_to_human_m
        )
    }
}

/// Built-in deterministic scene template over the visible entities.
pub fn describe_scene(world: &WorldState, agent: &AgentId) -> Result<SceneDescription, WorldError> {
    let targets = world.visible_targets(agent)?;
    let text = if targets.is_empty() {
        NOTHING_VISIBLE.to_string()
    } else {
        let parts: Vec<String> = targets
            .iter()
            .map(|t| {
                format!(
                    "{} at {:.1} m bearing {}°",
                    t.label,
                    t.distance_m,
                    whole_degrees(t.bearing_deg)
                )
            })
            .collect();
        format!("You see: {}.", parts.join("; "))
    };
    Ok(SceneDescription {
        text,
        visible_ids: targets.into_iter().map(|t| t.id).collect(),
        generated_by: SceneSource::SimTemplate,
    })
}

fn whole_degrees(deg: f64) -> i64 {
    // `as` saturates and maps -0.0 to 0.
    deg.round() as i64
}

/// Result of [`observe`]: the observation plus any adapter call made and a
/// warning when the external adapter had to be bypassed.
#[derive(Debug, Clone, PartialEq)]
pub struct Perceived {
    pub observation: Observation,
    pub call: Option<CallRecord>,
    pub warning: Option<String>,
}

fn scene_request(world: &WorldState, agent: &AgentId) -> CompletionRequest {
    let snapshot = json!({ "agent": agent, "world": world });
    let mut req = CompletionRequest::new(
        Purpose::Scene,
        format!(
            "You are the camera of robot {agent}. Describe what it sees in at most \
             {MAX_SCENE_CHARS} characters of plain text."
        ),
        snapshot.to_string(),
    );
    req.max_output_chars = MAX_SCENE_CHARS;
    req
}

/// Assembles the observation for `agent`. When `scene_adapter` is given its
/// text replaces the template; any adapter failure falls back to the
/// template and is reported as a warning, never as an error.
pub fn observe(
    world: &WorldState,
    agent: &AgentId,
    latest: Option<&Utterance>,
    scene_adapter: Option<&dyn CompletionBackend>,
) -> Result<Perceived, WorldError> {
    let body = world.body(agent)?;
    let mut scene = describe_scene(world, agent)?;
    let mut call = None;
    let mut warning = None;

    if let Some(adapter) = scene_adapter {
        let record = invoke(adapter, &scene_request(world, agent));
        match &record.result {
            Ok(text) if !text.trim().is_empty() => {
                scene.text = text.trim().to_string();
                scene.generated_by = SceneSource::ExternalAdapter;
            }
            Ok(_) => {
                warning = Some(format!(
                    "scene adapter returned empty text for {agent}; using template"
                ))
            }
            Err(e) => {
                warning = Some(format!("scene adapter failed for {agent}: {e}; using template"))
            }
        }
        if let Some(w) = &warning {
            log::warn!("{w}");
        }
        call = Some(record);
    }

    Ok(Perceived {
        observation: Observation {
            agent: agent.clone(),
            heard: latest.cloned(),
            scene,
            self_pose: body.pose,
            head: body.head,
            distance_to_human_m: body.pose.distance_to(&world.human),
            clock_ms: world.clock_ms,
        },
        call,
        warning,
    })
}
