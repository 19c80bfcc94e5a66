//! Arbitration overhead benchmark over synthetic rosters.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::config::{AgentPlacement, AgentSpec, BackendConfig, SessionConfig, WorldLayout};
use super::session::{Session, SessionError};
use crate::adapters::{
    BackendKind, CompletionBackend, CompletionRequest, Purpose, Reply, ScriptRule, ScriptedBackend,
};
use crate::coordinator::Backends;
use crate::domain::AgentId;
use crate::world::{Entity, HeadPose, Pose2D};

const WARMUP_TURNS: usize = 5;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("agent counts must be at least 2, got {0}")]
    TooFewAgents(usize),
    #[error("turn count must be positive")]
    NoTurns,
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub agents: usize,
    pub turns: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub mean_selected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn fit_linear(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    LinearFit { slope, intercept, r2 }
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("agents,turns,mean_ms,p95_ms,mean_selected\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.3}",
            r.agents, r.turns, r.mean_ms, r.p95_ms, r.mean_selected
        );
    }
    out
}

/// Wraps a backend and accumulates the wall time spent inside it.
struct Timed {
    inner: ScriptedBackend,
    nanos: Arc<AtomicU64>,
}

impl CompletionBackend for Timed {
    fn complete(&self, req: &CompletionRequest) -> Reply {
        let t = Instant::now();
        let r = self.inner.complete(req);
        self.nanos.fetch_add(t.elapsed().as_nanos() as u64, Ordering::Relaxed);
        r
    }

    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }
}

pub fn synthetic_config(n: usize, seed: u64) -> SessionConfig {
    let roster: Vec<AgentSpec> = (0..n)
        .map(|i| AgentSpec {
            id: AgentId::new(format!("agent_{i:03}")).expect("synthetic id"),
            display_name: format!("Unit{i}"),
            persona: "A helpful robot.".into(),
        })
        .collect();
    let agents = roster
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let theta = 2.0 * PI * i as f64 / n as f64;
            let pose = Pose2D::new(5.0 + 3.0 * theta.cos(), 5.0 + 3.0 * theta.sin(), theta.to_degrees() + 180.0);
            (
                a.id.clone(),
                AgentPlacement {
                    pose,
                    head: HeadPose::default(),
                },
            )
        })
        .collect();
    SessionConfig {
        roster,
        world: WorldLayout {
            bounds: Default::default(),
            fov: Default::default(),
            human: Pose2D::new(5.0, 5.0, 0.0),
            agents,
            entities: vec![
                Entity {
                    id: "cup".into(),
                    label: "cup".into(),
                    position: Pose2D::new(4.0, 5.5, 0.0),
                },
                Entity {
                    id: "chair".into(),
                    label: "chair".into(),
                    position: Pose2D::new(6.0, 4.0, 0.0),
                },
            ],
        },
        threshold: 0.5,
        fallback: Default::default(),
        retry_cap: 2,
        policy_cap: 8,
        context_window: 40,
        durations: Default::default(),
        strict_execution: false,
        backend: BackendConfig::Scripted {
            script: None,
            rules: vec![],
        },
        scene_adapter: false,
        seed,
        time_dilation: 0.0,
    }
}

pub fn turn_tag(k: usize) -> String {
    format!("[turn {k:05}]")
}

/// One scoring rule per turn with seeded uniform scores, plus a default
/// short Speak plan.
pub fn synthetic_rules(config: &SessionConfig, turns: usize, seed: u64) -> Vec<ScriptRule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rules = Vec::with_capacity(turns + 2);
    for k in 0..turns {
        let scores: BTreeMap<&str, f64> = config
            .roster
            .iter()
            .map(|a| (a.id.as_str(), rng.random::<f64>()))
            .collect();
        let body = serde_json::json!({ "scores": scores }).to_string();
        rules.push(ScriptRule::new(Purpose::Score, &turn_tag(k), &body).once());
    }
    rules.push(ScriptRule::new(Purpose::Score, "*", r#"{"scores":{}}"#));
    rules.push(ScriptRule::new(
        Purpose::Plan,
        "*",
        r#"{"actions":[{"kind":"speak","params":{"text":"Noted."}},{"kind":"gesture","params":{"type":"nod"}}]}"#,
    ));
    rules
}

/// Per-turn coordination overhead (wall time minus adapter time) for each
/// roster size.
pub fn bench(agent_counts: &[usize], turns: usize, seed: u64) -> Result<Vec<BenchRow>, BenchError> {
    if turns == 0 {
        return Err(BenchError::NoTurns);
    }
    if let Some(&n) = agent_counts.iter().find(|&&n| n < 2) {
        return Err(BenchError::TooFewAgents(n));
    }
    let mut rows = Vec::with_capacity(agent_counts.len());
    for &n in agent_counts {
        let config = synthetic_config(n, seed);
        let total = WARMUP_TURNS + turns;
        let nanos = Arc::new(AtomicU64::new(0));
        let scripted = ScriptedBackend::new(synthetic_rules(&config, total, seed ^ n as u64), &[Purpose::Plan, Purpose::Score])
            .expect("synthetic rules have defaults");
        let backend: Arc<dyn CompletionBackend> = Arc::new(Timed {
            inner: scripted,
            nanos: nanos.clone(),
        });
        let backends = Backends {
            planner: backend.clone(),
            scorer: backend,
            scene: None,
        };
        let mut session = Session::with_backends(config, &format!("bench-{n}"), None, backends)?;
        let mut samples = Vec::with_capacity(turns);
        let mut selected = 0usize;
        for k in 0..total {
            let text = format!("{} What should we do next?", turn_tag(k));
            let adapter_before = nanos.load(Ordering::Relaxed);
            let t = Instant::now();
            let record = session.post_utterance(&text, None)?;
            let wall = t.elapsed().as_nanos() as u64;
            let adapter = nanos.load(Ordering::Relaxed) - adapter_before;
            if k >= WARMUP_TURNS {
                samples.push(wall.saturating_sub(adapter) as f64 / 1e6);
                selected += record.selected.len();
            }
        }
        rows.push(BenchRow {
            agents: n,
            turns,
            mean_ms: samples.iter().sum::<f64>() / turns as f64,
            p95_ms: percentile(&mut samples, 0.95),
            mean_selected: selected as f64 / turns as f64,
        });
    }
    Ok(rows)
}

/// Nearest-rank percentile.
fn percentile(samples: &mut [f64], q: f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    samples[rank - 1]
}
