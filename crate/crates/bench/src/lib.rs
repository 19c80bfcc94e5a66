//! Fixtures shared by the criterion benches.

use cohort_core::coordinator::ScoreSource;
use cohort_core::domain::AgentProfile;
use cohort_core::runtime::bench::{synthetic_config, synthetic_rules, turn_tag};
use cohort_core::runtime::{BackendConfig, SessionConfig};
use cohort_core::ScoreVector;

/// Synthetic roster of `n` agents with deterministic scores spread over
/// [0, 1).
pub fn roster_and_scores(n: usize) -> (Vec<AgentProfile>, ScoreVector) {
    let roster = synthetic_config(n, 0).profiles();
    let raw = roster
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.clone(), ((i * 37) % 100) as f64 / 100.0))
        .collect();
    let scores = ScoreVector::from_scores(&roster, &raw, ScoreSource::Scripted);
    (roster, scores)
}

/// Scripted session config for `n` agents, plus an utterance whose scores
/// come from the seeded first-turn rule.
pub fn first_turn(n: usize) -> (SessionConfig, String) {
    let mut config = synthetic_config(n, 0);
    let rules = synthetic_rules(&config, 1, 0);
    config.backend = BackendConfig::Scripted { script: None, rules };
    (config, format!("{} What should we do next?", turn_tag(0)))
}
