//! The action primitive library: the closed set of parameterized primitives,
//! their parameter schemas, validation, and the capability manifest used to
//! constrain planning.
//!
//! Wire format for policies (what completion backends must emit):
//!
//! ```json
//! {"actions":[{"kind":"speak","params":{"text":"Hello","volume":0.7}}]}
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::AgentProfile;
use crate::world::Direction;

pub const DEFAULT_POLICY_CAP: usize = 8;
pub const DEFAULT_SPEAK_VOLUME: f64 = 0.7;
pub const DEFAULT_GESTURE_SPEED: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Speak,
    Posture,
    Gesture,
    HeadMove,
    Locomote,
    Hand,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 6] = [
        PrimitiveKind::Speak,
        PrimitiveKind::Posture,
        PrimitiveKind::Gesture,
        PrimitiveKind::HeadMove,
        PrimitiveKind::Locomote,
        PrimitiveKind::Hand,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PrimitiveKind::Speak => "speak",
            PrimitiveKind::Posture => "posture",
            PrimitiveKind::Gesture => "gesture",
            PrimitiveKind::HeadMove => "head_move",
            PrimitiveKind::Locomote => "locomote",
            PrimitiveKind::Hand => "hand",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn schema(self) -> &'static [ParamSchema] {
        match self {
            PrimitiveKind::Speak => SPEAK,
            PrimitiveKind::Posture => POSTURE,
            PrimitiveKind::Gesture => GESTURE,
            PrimitiveKind::HeadMove => HEAD_MOVE,
            PrimitiveKind::Locomote => LOCOMOTE,
            PrimitiveKind::Hand => HAND,
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const POSTURES: &[&str] = &["stand", "sit", "rest"];
pub const GESTURES: &[&str] = &["nod", "wave", "handshake", "point"];
pub const DIRECTIONS: &[&str] = &["forward", "backward", "left", "right"];
pub const HAND_STATES: &[&str] = &["open", "close"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamType {
    /// Non-empty text.
    Text,
    Choice {
        options: &'static [&'static str],
    },
    Number {
        min: f64,
        min_inclusive: bool,
        max: f64,
        max_inclusive: bool,
    },
}

impl ParamType {
    fn render(&self) -> String {
        match self {
            ParamType::Text => "non-empty text".to_string(),
            ParamType::Choice { options } => format!("one of {}", options.join(", ")),
            ParamType::Number {
                min,
                min_inclusive,
                max,
                max_inclusive,
            } => format!(
                "number in {}{}, {}{}",
                if *min_inclusive { '[' } else { '(' },
                min,
                max,
                if *max_inclusive { ']' } else { ')' },
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSchema {
    pub name: &'static str,
    #[serde(flatten)]
    pub ty: ParamType,
    /// Optional parameters carry a default; the rest are required.
    pub default: Option<f64>,
    pub unit: Option<&'static str>,
}

const fn number(
    name: &'static str,
    min: f64,
    min_inclusive: bool,
    max: f64,
    default: Option<f64>,
    unit: Option<&'static str>,
) -> ParamSchema {
    ParamSchema {
        name,
        ty: ParamType::Number {
            min,
            min_inclusive,
            max,
            max_inclusive: true,
        },
        default,
        unit,
    }
}

const fn choice(name: &'static str, options: &'static [&'static str]) -> ParamSchema {
    ParamSchema {
        name,
        ty: ParamType::Choice { options },
        default: None,
        unit: None,
    }
}

const SPEAK: &[ParamSchema] = &[
    ParamSchema {
        name: "text",
        ty: ParamType::Text,
        default: None,
        unit: None,
    },
    number("volume", 0.0, true, 1.0, Some(DEFAULT_SPEAK_VOLUME), None),
];
const POSTURE: &[ParamSchema] = &[choice("pose", POSTURES)];
const GESTURE: &[ParamSchema] = &[
    choice("type", GESTURES),
    number("speed", 0.0, false, 2.0, Some(DEFAULT_GESTURE_SPEED), None),
];
const HEAD_MOVE: &[ParamSchema] = &[
    number("pan_deg", -90.0, true, 90.0, None, Some("degrees")),
    number("tilt_deg", -30.0, true, 30.0, None, Some("degrees")),
];
const LOCOMOTE: &[ParamSchema] = &[
    choice("direction", DIRECTIONS),
    number("magnitude", 0.0, false, 2.0, None, Some("meters")),
];
const HAND: &[ParamSchema] = &[choice("state", HAND_STATES)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Number(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

impl From<String> for ParamValue {
    fn from(v: String) -> Self {
        ParamValue::Text(v)
    }
}

/// One parameterized action as it travels on the wire and through the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub kind: PrimitiveKind,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

impl ActionSpec {
    pub fn new(kind: PrimitiveKind) -> Self {
        Self {
            kind,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<ParamValue>) -> Self {
        self.params.insert(name.to_string(), value.into());
        self
    }

    pub fn speak(text: &str) -> Self {
        Self::new(PrimitiveKind::Speak)
            .with("text", text)
            .with("volume", DEFAULT_SPEAK_VOLUME)
    }

    pub fn gesture(kind: &str) -> Self {
        Self::new(PrimitiveKind::Gesture)
            .with("type", kind)
            .with("speed", DEFAULT_GESTURE_SPEED)
    }

    pub fn posture(pose: &str) -> Self {
        Self::new(PrimitiveKind::Posture).with("pose", pose)
    }

    pub fn head_move(pan_deg: f64, tilt_deg: f64) -> Self {
        Self::new(PrimitiveKind::HeadMove)
            .with("pan_deg", pan_deg)
            .with("tilt_deg", tilt_deg)
    }

    pub fn locomote(direction: Direction, magnitude: f64) -> Self {
        Self::new(PrimitiveKind::Locomote)
            .with("direction", direction.as_str())
            .with("magnitude", magnitude)
    }

    pub fn hand(state: &str) -> Self {
        Self::new(PrimitiveKind::Hand).with("state", state)
    }

    /// Inserts the declared default of every omitted optional parameter.
    pub fn fill_defaults(&mut self) {
        for p in self.kind.schema() {
            if let Some(default) = p.default {
                self.params
                    .entry(p.name.to_string())
                    .or_insert(ParamValue::Number(default));
            }
        }
    }

    /// Validates and converts into the typed form, filling defaults.
    pub fn to_action(&self) -> Result<Action, ValidationError> {
        validate_action(self)?;
        let text = |name: &str| match self.params.get(name) {
            Some(ParamValue::Text(s)) => s.clone(),
            _ => unreachable!("validated text param {name}"),
        };
        let num = |name: &str| match self.params.get(name) {
            Some(ParamValue::Number(n)) => *n,
            _ => self
                .kind
                .schema()
                .iter()
                .find(|p| p.name == name)
                .and_then(|p| p.default)
                .expect("validated numeric param"),
        };
        Ok(match self.kind {
            PrimitiveKind::Speak => Action::Speak {
                text: text("text"),
                volume: num("volume"),
            },
            PrimitiveKind::Posture => Action::Posture { pose: text("pose") },
            PrimitiveKind::Gesture => Action::Gesture {
                kind: text("type"),
                speed: num("speed"),
            },
            PrimitiveKind::HeadMove => Action::HeadMove {
                pan_deg: num("pan_deg"),
                tilt_deg: num("tilt_deg"),
            },
            PrimitiveKind::Locomote => Action::Locomote {
                direction: Direction::parse(&text("direction")).expect("validated direction"),
                magnitude: num("magnitude"),
            },
            PrimitiveKind::Hand => Action::Hand {
                state: text("state"),
            },
        })
    }
}

/// Typed view of a validated [`ActionSpec`] with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Speak { text: String, volume: f64 },
    Posture { pose: String },
    Gesture { kind: String, speed: f64 },
    HeadMove { pan_deg: f64, tilt_deg: f64 },
    Locomote { direction: Direction, magnitude: f64 },
    Hand { state: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ValidationError {
    #[error("unknown action kind {kind:?}")]
    UnknownKind { kind: String },
    #[error("missing parameter {param:?}")]
    MissingParam { param: String },
    #[error("unknown parameter {param:?}")]
    UnknownParam { param: String },
    #[error("parameter {param:?} out of range: {detail}")]
    OutOfRange { param: String, detail: String },
    #[error("parameter {param:?} has the wrong type, expected {expected}")]
    BadType { param: String, expected: String },
}

/// Checks `spec` against its kind's schema. Total: never panics, whatever the
/// parameter values (NaN and infinities are out of range).
pub fn validate_action(spec: &ActionSpec) -> Result<(), ValidationError> {
    let schema = spec.kind.schema();
    for p in schema {
        let value = match spec.params.get(p.name) {
            Some(v) => v,
            None if p.default.is_some() => continue,
            None => {
                return Err(ValidationError::MissingParam {
                    param: p.name.to_string(),
                })
            }
        };
        check_param(p, value)?;
    }
    if let Some(extra) = spec
        .params
        .keys()
        .find(|k| !schema.iter().any(|p| p.name == k.as_str()))
    {
        return Err(ValidationError::UnknownParam {
            param: extra.clone(),
        });
    }
    Ok(())
}

fn check_param(p: &ParamSchema, value: &ParamValue) -> Result<(), ValidationError> {
    let bad_type = |expected: &str| ValidationError::BadType {
        param: p.name.to_string(),
        expected: expected.to_string(),
    };
    let out_of_range = |detail: String| ValidationError::OutOfRange {
        param: p.name.to_string(),
        detail,
    };
    match (&p.ty, value) {
        (ParamType::Text, ParamValue::Text(s)) => {
            if s.trim().is_empty() {
                return Err(out_of_range("text must be non-empty".into()));
            }
        }
        (ParamType::Choice { options }, ParamValue::Text(s)) => {
            if !options.contains(&s.as_str()) {
                return Err(out_of_range(format!(
                    "{s:?} is not one of {}",
                    options.join(", ")
                )));
            }
        }
        (
            ParamType::Number {
                min,
                min_inclusive,
                max,
                max_inclusive,
            },
            ParamValue::Number(n),
        ) => {
            let above_min = if *min_inclusive { *n >= *min } else { *n > *min };
            let below_max = if *max_inclusive { *n <= *max } else { *n < *max };
            if !(above_min && below_max) {
                return Err(out_of_range(format!("{n} not in {}", p.ty.render())));
            }
        }
        (ParamType::Number { .. }, ParamValue::Text(_)) => return Err(bad_type("number")),
        (_, ParamValue::Number(_)) => return Err(bad_type("string")),
    }
    Ok(())
}

/// The planner's output: an ordered list of actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<ActionSpec>,
}

impl Policy {
    pub fn new(actions: Vec<ActionSpec>) -> Self {
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn kinds(&self) -> Vec<PrimitiveKind> {
        self.actions.iter().map(|a| a.kind).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("policy is empty")]
    Empty,
    #[error("policy has {len} actions, cap is {cap}")]
    TooLong { len: usize, cap: usize },
    #[error("invalid actions: {}", describe_failures(.0))]
    InvalidActions(Vec<(usize, ValidationError)>),
}

fn describe_failures(failures: &[(usize, ValidationError)]) -> String {
    failures
        .iter()
        .map(|(i, e)| format!("#{i}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn validate_policy(policy: &Policy, cap: usize) -> Result<(), PolicyError> {
    if policy.is_empty() {
        return Err(PolicyError::Empty);
    }
    if policy.len() > cap {
        return Err(PolicyError::TooLong {
            len: policy.len(),
            cap,
        });
    }
    let failures: Vec<_> = policy
        .actions
        .iter()
        .enumerate()
        .filter_map(|(i, a)| validate_action(a).err().map(|e| (i, e)))
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(PolicyError::InvalidActions(failures))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

/// Per-action result signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionStatus {
    pub action_index: usize,
    pub outcome: Outcome,
    pub detail: String,
    pub start_ms: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimitiveEntry {
    pub kind: PrimitiveKind,
    pub params: &'static [ParamSchema],
}

/// Prompt-ready enumeration of every primitive with its parameters, plus the
/// structured listing it was rendered from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapabilityManifest {
    pub text: String,
    pub primitives: Vec<PrimitiveEntry>,
}

pub fn capability_manifest(profile: &AgentProfile) -> CapabilityManifest {
    let primitives: Vec<PrimitiveEntry> = PrimitiveKind::ALL
        .into_iter()
        .map(|kind| PrimitiveEntry {
            kind,
            params: kind.schema(),
        })
        .collect();

    let mut text = format!(
        "Action capabilities of {} (use only these):\n",
        profile.display_name
    );
    for entry in &primitives {
        let params = entry
            .params
            .iter()
            .map(|p| {
                let mut s = format!("{}: {}", p.name, p.ty.render());
                if let Some(unit) = p.unit {
                    s.push_str(&format!(" {unit}"));
                }
                match p.default {
                    Some(d) => s.push_str(&format!(", optional, default {d}")),
                    None => s.push_str(", required"),
                }
                s
            })
            .collect::<Vec<_>>()
            .join("; ");
        text.push_str(&format!("- {}: {}\n", entry.kind, params));
    }
    CapabilityManifest { text, primitives }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AgentId;

    fn profile() -> AgentProfile {
        AgentProfile {
            id: AgentId::new("sam").unwrap(),
            display_name: "Sam".into(),
            persona: "A friendly robot.".into(),
            registration_index: 0,
        }
    }

    #[test]
    fn speak_ok() {
        let s = ActionSpec::new(PrimitiveKind::Speak)
            .with("text", "Hello")
            .with("volume", 0.7);
        assert_eq!(validate_action(&s), Ok(()));
    }

    #[test]
    fn locomote_too_far() {
        let s = ActionSpec::locomote(Direction::Forward, 10.0);
        assert!(matches!(
            validate_action(&s),
            Err(ValidationError::OutOfRange { param, .. }) if param == "magnitude"
        ));
    }

    #[test]
    fn unknown_gesture() {
        let s = ActionSpec::new(PrimitiveKind::Gesture).with("type", "dance");
        assert!(matches!(
            validate_action(&s),
            Err(ValidationError::OutOfRange { param, .. }) if param == "type"
        ));
    }

    #[test]
    fn missing_unknown_and_bad_type() {
        let s = ActionSpec::new(PrimitiveKind::HeadMove).with("pan_deg", 10.0);
        assert_eq!(
            validate_action(&s),
            Err(ValidationError::MissingParam {
                param: "tilt_deg".into()
            })
        );
        let s = ActionSpec::speak("hi").with("pitch", 3.0);
        assert_eq!(
            validate_action(&s),
            Err(ValidationError::UnknownParam {
                param: "pitch".into()
            })
        );
        let s = ActionSpec::new(PrimitiveKind::Speak).with("text", 4.0);
        assert!(matches!(validate_action(&s), Err(ValidationError::BadType { .. })));
        let s = ActionSpec::new(PrimitiveKind::Hand).with("state", 1.0);
        assert!(matches!(validate_action(&s), Err(ValidationError::BadType { .. })));
        let s = ActionSpec::new(PrimitiveKind::Speak).with("text", "  ");
        assert!(matches!(validate_action(&s), Err(ValidationError::OutOfRange { .. })));
    }

    #[test]
    fn nan_is_out_of_range() {
        let s = ActionSpec::speak("hi").with("volume", f64::NAN);
        assert!(matches!(validate_action(&s), Err(ValidationError::OutOfRange { .. })));
    }

    #[test]
    fn defaults_fill_and_typed_view() {
        let mut s = ActionSpec::new(PrimitiveKind::Speak).with("text", "Hi");
        assert_eq!(
            s.to_action().unwrap(),
            Action::Speak {
                text: "Hi".into(),
                volume: 0.7
            }
        );
        s.fill_defaults();
        assert_eq!(s.params.get("volume"), Some(&ParamValue::Number(0.7)));
    }

    #[test]
    fn gesture_speak_nod_policy_ok() {
        let p = Policy::new(vec![
            ActionSpec::gesture("wave"),
            ActionSpec::speak("Hello"),
            ActionSpec::gesture("nod"),
        ]);
        assert_eq!(validate_policy(&p, DEFAULT_POLICY_CAP), Ok(()));
    }

    #[test]
    fn empty_and_long_policies() {
        assert_eq!(
            validate_policy(&Policy::new(vec![]), DEFAULT_POLICY_CAP),
            Err(PolicyError::Empty)
        );
        let p = Policy::new(vec![ActionSpec::speak("Hi"); 9]);
        assert_eq!(
            validate_policy(&p, DEFAULT_POLICY_CAP),
            Err(PolicyError::TooLong { len: 9, cap: 8 })
        );
    }

    #[test]
    fn policy_reports_every_failing_index() {
        let p = Policy::new(vec![
            ActionSpec::locomote(Direction::Forward, 10.0),
            ActionSpec::speak("ok"),
            ActionSpec::posture("fly"),
        ]);
        match validate_policy(&p, 8) {
            Err(PolicyError::InvalidActions(f)) => {
                assert_eq!(f.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![0, 2])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wire_format_keys() {
        let p = Policy::new(vec![ActionSpec::speak("Hi"), ActionSpec::head_move(10.0, 0.0)]);
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"actions":[{"kind":"speak","params":{"text":"Hi","volume":0.7}},{"kind":"head_move","params":{"pan_deg":10.0,"tilt_deg":0.0}}]}"#
        );
    }

    #[test]
    fn manifest_lists_all_six() {
        let m = capability_manifest(&profile());
        assert_eq!(m.primitives.len(), 6);
        assert_eq!(m.text.lines().filter(|l| l.starts_with("- ")).count(), 6);
        assert!(m.text.contains("volume: number in [0, 1], optional, default 0.7"));
        assert!(m.text.contains("magnitude: number in (0, 2] meters, required"));
        assert_eq!(m, capability_manifest(&profile()));
    }
}
