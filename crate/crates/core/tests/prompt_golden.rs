//! The prompt format documented in docs/prompting.md is checked against the
//! builder byte for byte. Set COHORT_BLESS=1 to print the current render.

use cohort_core::actions::capability_manifest;
use cohort_core::domain::Utterance;
use cohort_core::perception::observe;
use cohort_core::planner::{build_planning_prompt, PlanningPrompt};
use cohort_core::runtime::{Scenario, Session};

const DOC: &str = include_str!("../../../docs/prompting.md");

/// Sam's prompt for the second turn of the bundled demo.
fn render() -> PlanningPrompt {
    let cfg = Scenario::bundled("demo_fig3").unwrap().config;
    let mut session = Session::create(cfg.clone(), "golden", None).unwrap();
    session.post_utterance("Hi, I'm Alice", None).unwrap();
    let world = session.world();
    let heard = Utterance::human("Can you help me choose between these two bottles?", world.clock_ms);
    let ctx = session.context().clone().appended(heard.clone()).unwrap();
    let profile = &session.roster()[0];
    let obs = observe(world, &profile.id, Some(&heard), None).unwrap().observation;
    let manifest = capability_manifest(profile).text;
    build_planning_prompt(&obs, &ctx, &manifest, profile, &cfg.planner())
}

/// Contents of the fenced block following `<!-- golden:NAME -->`.
fn block(name: &str) -> String {
    let marker = format!("<!-- golden:{name} -->");
    let start = DOC.find(&marker).unwrap_or_else(|| panic!("missing {marker}"));
    let rest = &DOC[start + marker.len()..];
    let open = rest.find("```text\n").expect("fenced block") + "```text\n".len();
    let close = rest[open..].find("\n```").expect("closing fence");
    rest[open..open + close].to_string()
}

#[test]
fn documented_prompt_matches_builder() {
    let p = render();
    if std::env::var_os("COHORT_BLESS").is_some() {
        println!("--- system\n{}\n--- user\n{}", p.system, p.user);
    }
    assert_eq!(block("system"), p.system);
    assert_eq!(block("user"), p.user);
}
