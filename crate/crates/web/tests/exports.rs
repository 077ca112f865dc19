use paxraft::Algorithm;
use paxraft_web::{hunt, split_votes, timeline};

#[test]
fn timeline_shows_failover() {
    let t = timeline("raft", 3, 1, 10, 600, 300).unwrap();
    let leaders = t.marks.iter().filter(|m| m.kind == "leader").count();
    assert!(leaders >= 2);
    assert!(t.marks.iter().any(|m| m.kind == "crash"));
    assert!(t.marks.iter().any(|m| m.kind == "restart"));
    assert!(t.violations.is_empty());
    assert!(t.metrics.iter().any(|(k, v)| k == "committed_ops" && v == "10"));
    let json = serde_json::to_string(&t).unwrap();
    assert!(json.contains("\"algorithm\":\"Raft\""));
}

#[test]
fn timeline_rejects_bad_input() {
    assert!(timeline("zab", 3, 0, 1, 0, 0).is_err());
    assert!(timeline("paxos", 0, 0, 1, 0, 0).is_err());
}

#[test]
fn split_votes_only_for_raft() {
    let rows = split_votes(20, 0);
    let paxos = rows.iter().find(|r| r.algorithm == Algorithm::Paxos).unwrap();
    let raft = rows.iter().find(|r| r.algorithm == Algorithm::Raft).unwrap();
    assert_eq!(paxos.split_votes, 0);
    assert!(raft.rate > 0.0);
}

#[test]
fn hunt_finds_a_mutation() {
    let h = hunt("", "raft-no-voted-for", 2_000, 0).unwrap();
    assert_eq!(h.verdict, "counterexample");
    assert!(!h.steps.is_empty());
    assert!(h.violations.iter().any(|v| v.contains("ElectionSafety")));
    assert!(hunt("raft", "nope", 10, 0).is_err());
}
