mod support;

use std::collections::BTreeMap;

use cohort_core::coordinator::{resolve_addressee, select_responders, ScoreSource};
use cohort_core::domain::Utterance;
use cohort_core::{FallbackMode, ScoreVector};
use support::*;

#[test]
fn corpus_is_fully_resolved() {
    let r = roster(&ADDRESSING_ROSTER);
    let cases = addressing_corpus();
    assert_eq!(cases.len(), 50);
    let mut wrong = Vec::new();
    for c in &cases {
        let mut u = Utterance::human(c.text.clone(), 0);
        if let Some(a) = &c.addressee {
            u = u.addressed_to(id(a));
        }
        let raw: BTreeMap<_, _> = r
            .iter()
            .map(|p| (p.id.clone(), c.scores.get(p.id.as_str()).copied().unwrap_or(0.2)))
            .collect();
        let v = ScoreVector::from_scores(&r, &raw, ScoreSource::Scripted);
        let addressee = resolve_addressee(&u, &r);
        let got = select_responders(&v, 0.5, addressee.as_ref(), &r, FallbackMode::Argmax).unwrap();
        let got: Vec<&str> = got.selected.iter().map(|a| a.as_str()).collect();
        if got != c.expect {
            wrong.push(format!("{:?}: expected {:?}, got {got:?}", c.text, c.expect));
        }
    }
    assert!(wrong.is_empty(), "{wrong:#?}");
}
