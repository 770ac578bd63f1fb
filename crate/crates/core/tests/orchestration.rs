use std::path::PathBuf;

use complipay_core::agents::Scenario;
use complipay_core::agents::{OrchestrationError, Orchestrator};
use complipay_core::Balance;

fn bundled(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&path).unwrap()
}

#[test]
fn scenario1_settles() {
    let s = bundled("scenario1.json");
    let report = Orchestrator::from_scenario(&s, s.seed).unwrap().run(s.max_rounds).unwrap();
    assert!(report.rounds <= 3, "rounds {}", report.rounds);
    assert_eq!(report.final_state.balances[&"seller".into()], Balance(100));
    assert_eq!(report.final_state.balances[&"buyer".into()], Balance(900));
    assert!(s.expect.as_ref().unwrap().check(&report).is_empty());
}

#[test]
fn scenario2_releases() {
    let s = bundled("scenario2.json");
    let report = Orchestrator::from_scenario(&s, s.seed).unwrap().run(s.max_rounds).unwrap();
    assert_eq!(report.final_state.balances[&"seller".into()], Balance(15_000));
    assert_eq!(report.final_state.balances[&"buyer".into()], Balance(5_000));
    assert_eq!(s.expect.as_ref().unwrap().check(&report), Vec::<String>::new());
    assert!(report.final_state.conservation.conserved);
}

#[test]
fn scenario2_without_evidence_stalls_locked() {
    let mut s = bundled("scenario2.json");
    s.intent.evidence_on_request = None;
    let report = Orchestrator::from_scenario(&s, s.seed).unwrap().run(s.max_rounds).unwrap();
    let locks = &report.final_state.service.ledger.locks;
    assert_eq!(locks.len(), 1);
    assert_eq!(locks.values().next().unwrap().state.to_string(), "LOCKED");
    assert_eq!(report.final_state.balances[&"seller".into()], Balance(10_000));
}

#[test]
fn max_rounds_too_small_is_non_quiescent() {
    let s = bundled("scenario2.json");
    match Orchestrator::from_scenario(&s, s.seed).unwrap().run(2) {
        Err(OrchestrationError::NonQuiescent { rounds, report }) => {
            assert_eq!(rounds, 2);
            assert!(!report.quiescent);
        }
        Ok(_) => panic!("expected NonQuiescent"),
    }
}

#[test]
fn runs_are_deterministic() {
    for name in ["scenario1.json", "scenario2.json"] {
        let s = bundled(name);
        let a = Orchestrator::from_scenario(&s, 99).unwrap().run(s.max_rounds).unwrap();
        let b = Orchestrator::from_scenario(&s, 99).unwrap().run(s.max_rounds).unwrap();
        assert_eq!(a.transcript.to_jsonl(), b.transcript.to_jsonl());
        assert_eq!(a.final_state, b.final_state);
        let c = Orchestrator::from_scenario(&s, 100).unwrap().run(s.max_rounds).unwrap();
        assert_ne!(a.transcript.to_jsonl(), c.transcript.to_jsonl());
    }
}
