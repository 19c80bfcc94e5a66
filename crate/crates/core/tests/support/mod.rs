//! Oracles, generators and fixtures shared by integration tests and the
//! acceptance suite. Everything here is written independently of the code
//! under test.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cohort_core::actions::{ActionSpec, Outcome, PrimitiveKind, GESTURES, HAND_STATES, POSTURES};
use cohort_core::adapters::{Purpose, ScriptRule};
use cohort_core::domain::{AgentId, AgentProfile};
use cohort_core::events::{Event, EventRecord};
use cohort_core::runtime::{AgentPlacement, AgentSpec, BackendConfig, SessionConfig, WorldLayout};
use cohort_core::world::{AgentBody, Direction, Entity, HeadPose, Pose2D, WorldState};
use cohort_core::FallbackMode;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Deserialize;

pub fn id(s: &str) -> AgentId {
    AgentId::new(s).unwrap()
}

pub fn roster(names: &[&str]) -> Vec<AgentProfile> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| AgentProfile {
            id: id(&n.to_lowercase()),
            display_name: n.to_string(),
            persona: String::new(),
            registration_index: i,
        })
        .collect()
}

// ---------------------------------------------------------------- selection

/// Selection by repeated linear scans: take the highest remaining qualified
/// score, earliest index on ties.
pub fn scan_select(scores: &[f64], threshold: f64, fallback: FallbackMode) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= threshold).collect();
    if remaining.is_empty() {
        if fallback == FallbackMode::Silence || scores.is_empty() {
            return vec![];
        }
        let mut best = 0;
        for i in 1..scores.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        return vec![best];
    }
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut pick = 0;
        for k in 1..remaining.len() {
            if scores[remaining[k]] > scores[remaining[pick]] {
                pick = k;
            }
        }
        out.push(remaining.remove(pick));
    }
    out
}

/// Enumerates every ordered subset of agents and keeps the ones satisfying
/// the selection rule stated as predicates. Exactly one must survive.
pub fn brute_force_select(scores: &[f64], threshold: f64, fallback: FallbackMode) -> Vec<usize> {
    let n = scores.len();
    let qualified: BTreeSet<usize> = (0..n).filter(|&i| scores[i] >= threshold).collect();
    let required: BTreeSet<usize> = if !qualified.is_empty() {
        qualified
    } else if fallback == FallbackMode::Argmax && n > 0 {
        (0..n)
            .filter(|&i| (0..n).all(|j| scores[i] > scores[j] || (scores[i] == scores[j] && i <= j)))
            .collect()
    } else {
        BTreeSet::new()
    };
    let ordered_ok = |seq: &[usize]| {
        seq.windows(2)
            .all(|w| scores[w[0]] > scores[w[1]] || (scores[w[0]] == scores[w[1]] && w[0] < w[1]))
    };
    let mut survivors = Vec::new();
    let mut seq = Vec::new();
    fn rec(
        n: usize,
        seq: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        accept: &dyn Fn(&[usize]) -> bool,
    ) {
        if accept(seq) {
            out.push(seq.clone());
        }
        for i in 0..n {
            if !seq.contains(&i) {
                seq.push(i);
                rec(n, seq, out, accept);
                seq.pop();
            }
        }
    }
    let accept = |s: &[usize]| s.iter().copied().collect::<BTreeSet<_>>() == required && ordered_ok(s);
    rec(n, &mut seq, &mut survivors, &accept);
    assert_eq!(survivors.len(), 1, "rule admits {} orderings for {scores:?}", survivors.len());
    survivors.pop().unwrap()
}

// ---------------------------------------------------------------- perception

/// Visible target ids via dot products, independent of the bearing-based
/// implementation: inside range and within the half angle of the gaze ray.
pub fn fov_oracle(world: &WorldState, agent: &AgentId) -> BTreeSet<String> {
    let body = &world.agents[agent];
    let gaze = (body.pose.heading_deg + body.head.pan_deg).to_radians();
    let (gx, gy) = (gaze.cos(), gaze.sin());
    let cos_half = world.fov.half_angle_deg.to_radians().cos();
    let mut points: Vec<(String, f64, f64)> =
        world.entities.iter().map(|e| (e.id.clone(), e.position.x, e.position.y)).collect();
    points.push(("human".into(), world.human.x, world.human.y));
    points
        .into_iter()
        .filter(|(_, x, y)| {
            let (vx, vy) = (x - body.pose.x, y - body.pose.y);
            let d = (vx * vx + vy * vy).sqrt();
            d <= world.fov.range_m && (d == 0.0 || vx * gx + vy * gy >= d * cos_half)
        })
        .map(|(id, _, _)| id)
        .collect()
}

pub fn random_world<R: Rng>(rng: &mut R, agents: &[AgentId], entities: usize) -> WorldState {
    let p = |rng: &mut R| Pose2D::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..360.0));
    WorldState {
        bounds: Default::default(),
        fov: Default::default(),
        agents: agents.iter().map(|a| (a.clone(), AgentBody::at(p(rng)))).collect(),
        human: p(rng),
        entities: (0..entities)
            .map(|i| Entity {
                id: format!("e{i}"),
                label: format!("thing {i}"),
                position: p(rng),
            })
            .collect(),
        clock_ms: 0,
    }
}

// ---------------------------------------------------------------- actions

pub fn random_valid_action<R: Rng>(rng: &mut R) -> ActionSpec {
    let words = ["hello", "there", "the", "bottle", "is", "blue", "I", "can", "see", "you", "nice", "day"];
    match rng.random_range(0..6) {
        0 => {
            let n = rng.random_range(1..12);
            let text: Vec<&str> = (0..n).map(|_| *words.choose(rng).unwrap()).collect();
            let mut s = ActionSpec::speak(&text.join(" "));
            if rng.random_bool(0.5) {
                s = s.with("volume", rng.random_range(0.0..=1.0));
            }
            s
        }
        1 => ActionSpec::posture(POSTURES.choose(rng).unwrap()),
        2 => {
            let mut s = ActionSpec::gesture(GESTURES.choose(rng).unwrap());
            if rng.random_bool(0.5) {
                s = s.with("speed", rng.random_range(0.1..=2.0));
            }
            s
        }
        3 => ActionSpec::head_move(rng.random_range(-90.0..=90.0), rng.random_range(-30.0..=30.0)),
        4 => {
            let d = [Direction::Forward, Direction::Backward, Direction::Left, Direction::Right];
            ActionSpec::locomote(*d.choose(rng).unwrap(), rng.random_range(0.05..=2.0))
        }
        _ => ActionSpec::hand(HAND_STATES.choose(rng).unwrap()),
    }
}

pub fn random_policy_actions<R: Rng>(rng: &mut R, max_len: usize) -> Vec<ActionSpec> {
    let n = rng.random_range(1..=max_len);
    (0..n).map(|_| random_valid_action(rng)).collect()
}

/// Independent speech duration: 400 ms per word (1000 / 2.5), floor 500.
pub fn speak_oracle_ms(text: &str) -> u64 {
    let words = text.split_whitespace().count() as u64;
    (words * 400).max(500)
}

// ---------------------------------------------------------------- log audits

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeechSpan {
    pub agent: AgentId,
    pub start: u64,
    pub end: u64,
}

/// Successful Speak spans reconstructed from action_start/action_end pairs.
pub fn speech_spans(records: &[EventRecord]) -> Vec<SpeechSpan> {
    let mut open: BTreeMap<(u64, AgentId, usize), u64> = BTreeMap::new();
    let mut spans = Vec::new();
    for r in records {
        match &r.event {
            Event::ActionStart {
                turn_index,
                agent,
                action_index,
                spec,
                start_ms,
            } if spec.kind == PrimitiveKind::Speak => {
                open.insert((*turn_index, agent.clone(), *action_index), *start_ms);
            }
            Event::ActionEnd {
                turn_index,
                agent,
                action_index,
                action: PrimitiveKind::Speak,
                outcome,
                end_ms,
                ..
            } => {
                let start = open.remove(&(*turn_index, agent.clone(), *action_index)).expect("paired start");
                if *outcome == Outcome::Success {
                    spans.push(SpeechSpan {
                        agent: agent.clone(),
                        start,
                        end: *end_ms,
                    });
                }
            }
            _ => {}
        }
    }
    spans
}

/// Number of overlapping pairs among half-open spans (checked pairwise).
pub fn overlapping_pairs(spans: &[SpeechSpan]) -> usize {
    let mut n = 0;
    for i in 0..spans.len() {
        for j in i + 1..spans.len() {
            let (a, b) = (&spans[i], &spans[j]);
            if a.start < b.end && b.start < a.end {
                n += 1;
            }
        }
    }
    n
}

// ---------------------------------------------------------------- sessions

fn turn_tag(k: usize) -> String {
    format!("[t{k:04}]")
}

pub fn turn_text(k: usize) -> String {
    format!("{} tell me something", turn_tag(k))
}

/// A random roster (1..=max_agents) with random scripted scores and policies
/// for `turns` turns. Utterances must come from [`turn_text`].
pub fn random_session_config<R: Rng>(rng: &mut R, max_agents: usize, turns: usize) -> SessionConfig {
    const NAMES: [&str; 5] = ["Sam", "Journey", "Ada", "Kit", "Rho"];
    let n = rng.random_range(1..=max_agents.min(NAMES.len()));
    let roster: Vec<AgentSpec> = NAMES[..n]
        .iter()
        .map(|name| AgentSpec {
            id: id(&name.to_lowercase()),
            display_name: name.to_string(),
            persona: String::new(),
        })
        .collect();
    let agents: BTreeMap<AgentId, AgentPlacement> = roster
        .iter()
        .map(|a| {
            (
                a.id.clone(),
                AgentPlacement {
                    pose: Pose2D::new(rng.random_range(1.0..9.0), rng.random_range(1.0..9.0), rng.random_range(0.0..360.0)),
                    head: HeadPose::default(),
                },
            )
        })
        .collect();
    let mut rules = Vec::new();
    for k in 0..turns {
        let scores: BTreeMap<&str, f64> = roster.iter().map(|a| (a.id.as_str(), rng.random_range(0.0..1.0))).collect();
        rules.push(
            ScriptRule::new(Purpose::Score, &turn_tag(k), &serde_json::json!({ "scores": scores }).to_string()).once(),
        );
        for a in &roster {
            let actions = random_policy_actions(rng, 5);
            let body = serde_json::json!({ "actions": actions }).to_string();
            rules.push(
                ScriptRule::new(Purpose::Plan, &format!("You heard: {}", turn_text(k)), &body)
                    .for_system(&format!("capabilities of {} ", a.display_name)),
            );
        }
    }
    rules.push(ScriptRule::new(Purpose::Score, "*", r#"{"scores":{}}"#));
    rules.push(ScriptRule::new(Purpose::Plan, "*", r#"{"actions":[{"kind":"speak","params":{"text":"ok"}}]}"#));
    SessionConfig {
        roster,
        world: WorldLayout {
            bounds: Default::default(),
            fov: Default::default(),
            human: Pose2D::new(5.0, 5.0, 0.0),
            agents,
            entities: vec![Entity {
                id: "bottle".into(),
                label: "bottle".into(),
                position: Pose2D::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), 0.0),
            }],
        },
        threshold: rng.random_range(0.0..=1.0),
        fallback: if rng.random_bool(0.5) { FallbackMode::Argmax } else { FallbackMode::Silence },
        retry_cap: 2,
        policy_cap: 8,
        context_window: 40,
        durations: Default::default(),
        strict_execution: false,
        backend: BackendConfig::Scripted { script: None, rules },
        scene_adapter: false,
        seed: rng.random(),
        time_dilation: 0.0,
    }
}

// ---------------------------------------------------------------- addressing corpus

#[derive(Debug, Deserialize)]
pub struct AddressingCase {
    pub text: String,
    #[serde(default)]
    pub addressee: Option<String>,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    pub expect: Vec<String>,
}

#[derive(Deserialize)]
struct AddressingFile {
    case: Vec<AddressingCase>,
}

pub const ADDRESSING_ROSTER: [&str; 3] = ["Sam", "Journey", "Ada"];

pub fn addressing_corpus() -> Vec<AddressingCase> {
    let f: AddressingFile = toml::from_str(include_str!("addressing.toml")).expect("corpus parses");
    f.case
}

// ---------------------------------------------------------------- planner fuzz corpus

/// 200 malformed, wrapped, truncated or otherwise awkward planner replies.
/// Deterministic for a given seed.
pub fn fuzz_corpus<R: Rng>(rng: &mut R) -> Vec<String> {
    let valid = r#"{"actions":[{"kind":"speak","params":{"text":"Hello there"}},{"kind":"gesture","params":{"type":"wave"}}]}"#;
    let mut out: Vec<String> = vec![
        String::new(),
        " ".into(),
        "null".into(),
        "[]".into(),
        "{}".into(),
        "{\"actions\":[]}".into(),
        "{\"actions\":null}".into(),
        "{\"actions\":{}}".into(),
        "{\"actions\":\"speak\"}".into(),
        "{\"actions\":[null]}".into(),
        "{\"actions\":[{}]}".into(),
        "{\"actions\":[{\"kind\":\"speak\"}]}".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{}}]}".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{\"text\":\"\"}}]}".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{\"text\":42}}]}".into(),
        "{\"actions\":[{\"kind\":\"fly\",\"params\":{}}]}".into(),
        "{\"actions\":[{\"kind\":\"locomote\",\"params\":{\"direction\":\"up\",\"magnitude\":1}}]}".into(),
        "{\"actions\":[{\"kind\":\"locomote\",\"params\":{\"direction\":\"forward\",\"magnitude\":5}}]}".into(),
        "{\"actions\":[{\"kind\":\"locomote\",\"params\":{\"direction\":\"forward\",\"magnitude\":0}}]}".into(),
        "{\"actions\":[{\"kind\":\"locomote\",\"params\":{\"direction\":\"forward\",\"magnitude\":-1}}]}".into(),
        "{\"actions\":[{\"kind\":\"head_move\",\"params\":{\"pan_deg\":120,\"tilt_deg\":0}}]}".into(),
        "{\"actions\":[{\"kind\":\"head_move\",\"params\":{\"pan_deg\":0}}]}".into(),
        "{\"actions\":[{\"kind\":\"head_move\",\"params\":{\"pan_deg\":\"left\",\"tilt_deg\":0}}]}".into(),
        "{\"actions\":[{\"kind\":\"gesture\",\"params\":{\"type\":\"dance\"}}]}".into(),
        "{\"actions\":[{\"kind\":\"gesture\",\"params\":{\"type\":\"nod\",\"speed\":0}}]}".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{\"text\":\"hi\",\"volume\":1.5}}]}".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{\"text\":\"hi\",\"pitch\":3}}]}".into(),
        "{\"actions\":[{\"kind\":\"posture\",\"params\":{\"pose\":\"jump\"}}]}".into(),
        "{\"actions\":[{\"kind\":\"hand\",\"params\":{\"state\":\"fist\"}}]}".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{\"text\":\"hi\"}}]".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{\"text\":\"hi}}]}".into(),
        "{'actions':[{'kind':'speak','params':{'text':'hi'}}]}".into(),
        "{actions:[{kind:speak}]}".into(),
        "```json\n{\"actions\": [\n```".into(),
        "I think I should wave.".into(),
        "Sure! {\"thought\":\"hmm\"} and nothing else".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{\"text\":\"hi\"}}],\"actions\":5}".into(),
        "}{".into(),
        "{{{{{{{{".into(),
        "}}}}}}}}".into(),
        "\u{0}\u{1}\u{2}".into(),
        "{\"actions\":[1,2,3]}".into(),
        "{\"actions\":[{\"kind\":null,\"params\":null}]}".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{\"text\":\"hi\",\"volume\":NaN}}]}".into(),
        "{\"actions\":[{\"kind\":\"speak\",\"params\":{\"text\":\"hi\",\"volume\":1e999}}]}".into(),
        format!(
            "{{\"actions\":[{}]}}",
            [r#"{"kind":"speak","params":{"text":"hi"}}"#; 9].join(",")
        ),
        format!("{{\"actions\":[{}]}}", vec![r#"{"kind":"hand","params":{"state":"open"}}"#; 50].join(",")),
        "ф".repeat(5000),
        "{".repeat(3000),
        "[".repeat(3000),
    ];
    // Truncations of a valid reply.
    while out.len() < 110 {
        let cut = rng.random_range(0..valid.len() - 1);
        out.push(valid[..cut].to_string());
    }
    // Valid replies with injected corruption.
    while out.len() < 150 {
        let mut bytes: Vec<char> = valid.chars().collect();
        let at = rng.random_range(0..bytes.len());
        match rng.random_range(0..3) {
            0 => {
                bytes.remove(at);
            }
            1 => bytes.insert(at, *['{', '}', '"', ',', ':', '['].choose(rng).unwrap()),
            _ => bytes[at] = *['x', '0', ' ', '\\'].choose(rng).unwrap(),
        }
        out.push(bytes.into_iter().collect());
    }
    // Good or bad policies wrapped in prose and fences.
    let wrappers = [
        ("Here is my plan:\n", "\nHope that helps."),
        ("```json\n", "\n```"),
        ("<policy>", "</policy>"),
        ("{\"note\": \"draft\"} then ", ""),
        ("", " {\"extra\": true}"),
    ];
    while out.len() < 200 {
        let (pre, post) = wrappers.choose(rng).unwrap();
        let mut actions = random_policy_actions(rng, 10);
        if rng.random_bool(0.4) {
            let i = rng.random_range(0..actions.len());
            actions[i] = actions[i].clone().with("bogus", 1.0);
        }
        let body = serde_json::json!({ "actions": actions }).to_string();
        out.push(format!("{pre}{body}{post}"));
    }
    out
}
