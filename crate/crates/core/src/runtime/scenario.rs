//! Declarative scenario files: a session config, a scripted sequence of
//! human utterances and per-turn expectations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, SessionConfig};
use super::session::{Session, SessionError};
use crate::actions::{Action, PrimitiveKind};
use crate::domain::{AgentId, TurnRecord};
use crate::world::{WorldState, HUMAN_ID};

pub const LOG_DIR_ENV: &str = "COHORT_LOG_DIR";
pub const DEFAULT_LOG_DIR: &str = "logs";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub config: SessionConfig,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addressee: Option<AgentId>,
    #[serde(default)]
    pub expect: Expectations,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    /// Exact responder list, in speaking order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<AgentId>>,
    /// Exact primitive sequence per agent.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub policy_kinds: BTreeMap<AgentId, Vec<PrimitiveKind>>,
    /// Primitives that must appear somewhere in the agent's policy.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub policy_includes: BTreeMap<AgentId, Vec<PrimitiveKind>>,
    /// Case-insensitive substring of at least one of the agent's Speak texts.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub speech_contains: BTreeMap<AgentId, String>,
    /// All Speak texts produced in the turn are pairwise different.
    #[serde(default)]
    pub distinct_speech: bool,
    /// Predicates such as `distance(journey, human) decreases`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub world: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Decreases,
    Increases,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldPredicate {
    pub a: String,
    pub b: String,
    pub trend: Trend,
}

const DISTANCE_EPS: f64 = 1e-9;

impl WorldPredicate {
    pub fn parse(text: &str) -> Option<Self> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| {
            Regex::new(r"^\s*distance\(\s*(\w+)\s*,\s*(\w+)\s*\)\s+(decreases|increases|unchanged)\s*$")
                .expect("static regex")
        });
        let c = re.captures(text)?;
        let trend = match &c[3] {
            "decreases" => Trend::Decreases,
            "increases" => Trend::Increases,
            _ => Trend::Unchanged,
        };
        Some(Self {
            a: c[1].to_string(),
            b: c[2].to_string(),
            trend,
        })
    }

    /// Compares the distance between the two targets before and after a turn.
    pub fn check(&self, before: &WorldState, after: &WorldState) -> Result<(f64, f64), String> {
        let d0 = target_distance(before, &self.a, &self.b)?;
        let d1 = target_distance(after, &self.a, &self.b)?;
        let ok = match self.trend {
            Trend::Decreases => d1 < d0 - DISTANCE_EPS,
            Trend::Increases => d1 > d0 + DISTANCE_EPS,
            Trend::Unchanged => (d1 - d0).abs() <= DISTANCE_EPS,
        };
        if ok {
            Ok((d0, d1))
        } else {
            Err(format!("distance went from {d0:.3} m to {d1:.3} m"))
        }
    }
}

fn target_position(world: &WorldState, name: &str) -> Option<(f64, f64)> {
    if name == HUMAN_ID {
        return Some((world.human.x, world.human.y));
    }
    if let Some((_, body)) = world.agents.iter().find(|(id, _)| id.as_str() == name) {
        return Some((body.pose.x, body.pose.y));
    }
    world
        .entities
        .iter()
        .find(|e| e.id == name)
        .map(|e| (e.position.x, e.position.y))
}

fn target_distance(world: &WorldState, a: &str, b: &str) -> Result<f64, String> {
    let (ax, ay) = target_position(world, a).ok_or_else(|| format!("unknown target {a}"))?;
    let (bx, by) = target_position(world, b).ok_or_else(|| format!("unknown target {b}"))?;
    let (dx, dy) = (ax - bx, ay - by);
    Ok((dx * dx + dy * dy).sqrt())
}

/// Scenarios shipped with the crate, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[("demo_fig3", include_str!("../../scenarios/demo_fig3.toml"))];

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut s = Self::parse(&text, base, path)?;
        if s.name.is_empty() {
            s.name = path
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into());
        }
        Ok(s)
    }

    pub fn bundled(name: &str) -> Option<Self> {
        let (_, text) = BUNDLED.iter().find(|(n, _)| *n == name)?;
        let mut s = Self::parse(text, Path::new("."), Path::new(name)).expect("bundled scenarios parse");
        if s.name.is_empty() {
            s.name = name.to_string();
        }
        Some(s)
    }

    /// Parses scenario TOML; `base_dir` resolves relative script paths and
    /// `origin` is used in error messages.
    pub fn parse(text: &str, base_dir: &Path, origin: &Path) -> Result<Self, ScenarioError> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        s.config.inline_script(base_dir)?;
        s.config.validate()?;
        s.validate_script()?;
        Ok(s)
    }

    fn validate_script(&self) -> Result<(), ConfigError> {
        let roster: BTreeSet<&AgentId> = self.config.roster.iter().map(|a| &a.id).collect();
        for (i, step) in self.script.iter().enumerate() {
            let field = |f: &str| format!("script[{i}].{f}");
            if step.text.trim().is_empty() {
                return Err(ConfigError::new(field("text"), "must be non-empty"));
            }
            if let Some(a) = &step.addressee {
                if !roster.contains(a) {
                    return Err(ConfigError::new(field("addressee"), format!("{a} is not in the roster")));
                }
            }
            let e = &step.expect;
            let agents = e
                .selected
                .iter()
                .flatten()
                .chain(e.policy_kinds.keys())
                .chain(e.policy_includes.keys())
                .chain(e.speech_contains.keys());
            for a in agents {
                if !roster.contains(a) {
                    return Err(ConfigError::new(field("expect"), format!("{a} is not in the roster")));
                }
            }
            for w in &e.world {
                if WorldPredicate::parse(w).is_none() {
                    return Err(ConfigError::new(
                        field("expect.world"),
                        format!("cannot parse predicate {w:?}; expected `distance(a, b) decreases|increases|unchanged`"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub log_path: Option<PathBuf>,
    /// Keep the log in memory only.
    pub no_log_file: bool,
}

#[derive(Debug)]
pub struct ScenarioReport {
    pub name: String,
    pub session_id: String,
    pub passed: bool,
    pub failures: Vec<String>,
    pub log_path: Option<PathBuf>,
    pub turns: Vec<TurnRecord>,
    pub session: Session,
}

pub fn default_log_path(name: &str, seed: u64) -> PathBuf {
    let dir = std::env::var_os(LOG_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_LOG_DIR));
    dir.join(format!("{name}-{seed}.jsonl"))
}

pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<ScenarioReport, ScenarioError> {
    run_loaded(Scenario::load(path)?, opts)
}

/// Runs every scripted step and checks its expectations. Expectation
/// failures are reported, not returned as errors.
pub fn run_loaded(mut scenario: Scenario, opts: &RunOptions) -> Result<ScenarioReport, ScenarioError> {
    if let Some(seed) = opts.seed {
        scenario.config.seed = seed;
    }
    let seed = scenario.config.seed;
    let session_id = format!("{}-{seed}", scenario.name);
    let log_path = if opts.no_log_file {
        None
    } else {
        Some(opts.log_path.clone().unwrap_or_else(|| default_log_path(&scenario.name, seed)))
    };
    let mut session = Session::create(scenario.config.clone(), &session_id, log_path.as_deref())?;

    let mut failures = Vec::new();
    let mut turns = Vec::new();
    for (i, step) in scenario.script.iter().enumerate() {
        let before = session.world().clone();
        let record = session.post_utterance(&step.text, step.addressee.as_ref().map(|a| a.as_str()))?;
        for f in check_expectations(&step.expect, &record, &before, session.world()) {
            failures.push(format!("turn {}: {f}", i + 1));
        }
        turns.push(record);
    }
    session.close();
    Ok(ScenarioReport {
        name: scenario.name,
        session_id,
        passed: failures.is_empty(),
        failures,
        log_path,
        turns,
        session,
    })
}

fn speech_texts(record: &TurnRecord, agent: &AgentId) -> Vec<String> {
    record
        .policies
        .get(agent)
        .map(|p| {
            p.actions
                .iter()
                .filter_map(|s| match s.to_action() {
                    Ok(Action::Speak { text, .. }) => Some(text),
                    _ => None,
                })
                .collect()
        })
        .unwrap_or_default()
}

fn names(ids: &[AgentId]) -> String {
    ids.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(", ")
}

pub fn check_expectations(
    e: &Expectations,
    record: &TurnRecord,
    before: &WorldState,
    after: &WorldState,
) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(want) = &e.selected {
        if want != &record.selected {
            out.push(format!(
                "expected selected [{}], got [{}]",
                names(want),
                names(&record.selected)
            ));
        }
    }
    for (agent, want) in &e.policy_kinds {
        let got = record.policies.get(agent).map(|p| p.kinds()).unwrap_or_default();
        if &got != want {
            out.push(format!("{agent}: expected policy kinds {want:?}, got {got:?}"));
        }
    }
    for (agent, want) in &e.policy_includes {
        let got = record.policies.get(agent).map(|p| p.kinds()).unwrap_or_default();
        for k in want {
            if !got.contains(k) {
                out.push(format!("{agent}: policy {got:?} lacks {}", k.as_str()));
            }
        }
    }
    for (agent, needle) in &e.speech_contains {
        let needle = needle.to_lowercase();
        let texts = speech_texts(record, agent);
        if !texts.iter().any(|t| t.to_lowercase().contains(&needle)) {
            out.push(format!("{agent}: no speech contains {needle:?} (said {texts:?})"));
        }
    }
    if e.distinct_speech {
        let all: Vec<String> = record.selected.iter().flat_map(|a| speech_texts(record, a)).collect();
        let unique: BTreeSet<&String> = all.iter().collect();
        if unique.len() != all.len() {
            out.push(format!("speech is not distinct: {all:?}"));
        }
    }
    for w in &e.world {
        match WorldPredicate::parse(w) {
            Some(p) => {
                if let Err(why) = p.check(before, after) {
                    out.push(format!("{w}: {why}"));
                }
            }
            None => out.push(format!("unparseable predicate {w:?}")),
        }
    }
    out
}
