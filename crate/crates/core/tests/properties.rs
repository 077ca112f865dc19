use std::collections::BTreeMap;

use paxraft::check::check_all;
use paxraft::message::{AppendEntriesReq, AppendEntriesResp, PaxosVoteReq, PaxosVoteResp, RaftVoteReq, RaftVoteResp};
use paxraft::paxos::next_candidate_term;
use paxraft::raft::raft_up_to_date;
use paxraft::sim::{self, DelayModel, Event, FaultEvent, FaultKind, Scenario, Workload};
use paxraft::{
    Algorithm, ClusterConfig, Effect, Input, LogEntry, Message, Node, NodeConfig, Operation, Role, TimerKind, Term,
};
use proptest::prelude::*;

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop_oneof![Just(Algorithm::Paxos), Just(Algorithm::Raft)]
}

fn entry() -> impl Strategy<Value = LogEntry> {
    (1u64..6, 0u64..6).prop_map(|(op, t)| LogEntry::new(Operation(op), Term(t)))
}

fn message() -> impl Strategy<Value = Message> {
    let term = (0u64..8).prop_map(Term);
    prop_oneof![
        (term.clone(), 0usize..3, 0u64..4, 0u64..6, prop::collection::vec(entry(), 0..3), 0u64..4).prop_map(
            |(term, leader_id, prev_log_index, pt, entries, leader_commit)| {
                Message::AppendEntries(AppendEntriesReq {
                    term,
                    leader_id,
                    prev_log_index,
                    prev_log_term: Term(pt),
                    entries,
                    leader_commit,
                })
            }
        ),
        (term.clone(), any::<bool>(), 0u64..5).prop_map(|(term, success, last_appended)| {
            Message::AppendEntriesResp(AppendEntriesResp { term, success, last_appended })
        }),
        (term.clone(), 0u64..3).prop_map(|(term, leader_commit)| {
            Message::PaxosRequestVote(PaxosVoteReq { term, leader_commit })
        }),
        (term.clone(), any::<bool>(), prop::collection::vec(entry(), 0..3)).prop_map(|(term, vote_granted, es)| {
            let entries = es.into_iter().enumerate().map(|(k, e)| (k as u64 + 1, e)).collect();
            Message::PaxosRequestVoteResp(PaxosVoteResp { term, vote_granted, entries })
        }),
        (term.clone(), 0usize..3, 0u64..4, 0u64..6).prop_map(|(term, candidate_id, li, lt)| {
            Message::RaftRequestVote(RaftVoteReq {
                term,
                candidate_id,
                last_log_index: li,
                last_log_term: Term(lt),
            })
        }),
        (term, any::<bool>()).prop_map(|(term, vote_granted)| {
            Message::RaftRequestVoteResp(RaftVoteResp { term, vote_granted })
        }),
    ]
}

fn input() -> impl Strategy<Value = Input> {
    prop_oneof![
        3 => (1usize..3, message()).prop_map(|(from, msg)| Input::Deliver { from, msg }),
        2 => Just(Input::Timer(TimerKind::Election)),
        1 => Just(Input::Timer(TimerKind::Heartbeat)),
        1 => (1u64..10).prop_map(|op| Input::ClientRequest(Operation(op))),
        1 => Just(Input::Restart),
    ]
}

fn node(alg: Algorithm) -> Node {
    Node::new(NodeConfig::new(0, ClusterConfig::new(3).unwrap(), alg))
}

proptest! {
    #[test]
    fn candidate_terms_are_owned_and_minimal(current in 0u64..1_000, n in 1usize..8, s in 0usize..8) {
        prop_assume!(s < n);
        let t = next_candidate_term(Term(current), n, s);
        prop_assert!(t.0 > current);
        prop_assert_eq!(t.0 % n as u64, s as u64);
        prop_assert!(t.0 - current <= n as u64);
    }

    #[test]
    fn up_to_date_is_total(a in (0u64..5, 0u64..5), b in (0u64..5, 0u64..5)) {
        let (a, b) = ((a.0, Term(a.1)), (b.0, Term(b.1)));
        prop_assert!(raft_up_to_date(a, a));
        prop_assert!(raft_up_to_date(a, b) || raft_up_to_date(b, a));
    }

    #[test]
    fn step_is_a_pure_function(alg in algorithm(), inputs in prop::collection::vec(input(), 0..40)) {
        let (mut a, mut b) = (node(alg), node(alg));
        for i in inputs {
            let (ra, rb) = (a.step(i.clone()), b.step(i));
            prop_assert_eq!(&ra, &rb);
            prop_assert_eq!(&a, &b);
            if ra.is_err() {
                break;
            }
        }
    }

    #[test]
    fn handlers_keep_local_invariants(alg in algorithm(), inputs in prop::collection::vec(input(), 0..60)) {
        let mut nd = node(alg);
        for i in inputs {
            let before = nd.state.clone();
            let Ok(effects) = nd.step(i) else { break };
            let st = &nd.state;
            prop_assert!(st.current_term >= before.current_term);
            prop_assert!(st.last_applied <= st.commit_index);
            prop_assert!(st.last_applied >= before.last_applied || st.last_applied == 0);
            if st.persistent() != before.persistent() {
                prop_assert_eq!(effects.first(), Some(&Effect::Persist));
            } else {
                prop_assert!(!effects.contains(&Effect::Persist));
            }
            if alg == Algorithm::Paxos {
                prop_assert_eq!(st.voted_for, None);
            }
            for e in &effects {
                if let Effect::RoleChange { role: Role::Candidate, term } = e {
                    if alg == Algorithm::Paxos {
                        prop_assert_eq!(term.0 % 3, 0);
                    }
                }
            }
        }
    }

    /// The merged log depends on the set of votes, not their arrival order.
    #[test]
    fn paxos_merge_ignores_vote_order(
        suffixes in prop::collection::vec(prop::collection::vec(1u64..5, 0..4), 2),
        own in prop::collection::vec(1u64..5, 0..4),
    ) {
        // Terms encode (index, voter) so no two distinct entries tie.
        let with_terms = |ops: &Vec<u64>, voter: u64| -> Vec<(u64, LogEntry)> {
            ops.iter().enumerate()
                .map(|(k, &op)| (k as u64 + 1, LogEntry::new(Operation(op), Term(10 * (k as u64 + 1) + voter))))
                .collect()
        };
        let leader_log = |order: [usize; 2]| {
            let mut nd = Node::new(NodeConfig::new(0, ClusterConfig::new(5).unwrap(), Algorithm::Paxos));
            nd.state.log = paxraft::Log::from_entries(with_terms(&own, 0).into_iter().map(|(_, e)| e).collect());
            nd.step(Input::Timer(TimerKind::Election)).unwrap();
            let term = nd.state.current_term;
            for k in order {
                let msg = Message::PaxosRequestVoteResp(PaxosVoteResp {
                    term,
                    vote_granted: true,
                    entries: with_terms(&suffixes[k], k as u64 + 1),
                });
                nd.step(Input::Deliver { from: k + 1, msg }).unwrap();
            }
            assert!(nd.is_leader());
            nd.state.log
        };
        let a = leader_log([0, 1]);
        let b = leader_log([1, 0]);
        prop_assert_eq!(&a, &b);
        let longest = suffixes.iter().map(Vec::len).chain([own.len()]).max().unwrap();
        prop_assert_eq!(a.len(), longest as u64);
        prop_assert!(a.iter().all(|(_, e)| e.term == a.get(1).unwrap().term));
    }
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (
        algorithm(),
        prop_oneof![Just(3usize), Just(5usize)],
        any::<u64>(),
        1u64..6,
        0u64..15,
        prop::collection::vec((100u64..1_500, 0usize..4), 0..4),
        1u64..12,
    )
        .prop_map(|(alg, n, seed, lo, jitter, faults, ops)| {
            let mut sc = Scenario::new(alg, n, seed);
            sc.duration = 2_000;
            sc.delay = DelayModel::Uniform { lo, hi: lo + jitter };
            sc.workload = Workload::Rate { start: 200, interval: 60, count: ops };
            sc.faults = faults
                .into_iter()
                .map(|(at, k)| FaultEvent {
                    at,
                    kind: match k {
                        0 => FaultKind::CrashLeader,
                        1 => FaultKind::RestartAll,
                        2 => FaultKind::PartitionSet(vec![vec![0], (1..n).collect()]),
                        _ => FaultKind::Heal,
                    },
                })
                .collect();
            sc.faults.sort_by_key(|f| f.at);
            sc
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delivery_order_matches_send_order(sc in scenario()) {
        let out = sim::run(&sc).unwrap();
        let mut sent: BTreeMap<(usize, usize), Vec<&Message>> = BTreeMap::new();
        let mut arrived: BTreeMap<(usize, usize), Vec<&Message>> = BTreeMap::new();
        for e in out.trace.iter() {
            match &e.event {
                Event::SendMsg { from, to, msg } => sent.entry((*from, *to)).or_default().push(msg),
                Event::DeliverMsg { from, to, msg } => arrived.entry((*from, *to)).or_default().push(msg),
                _ => {}
            }
        }
        for (link, got) in arrived {
            let mut sends = sent.get(&link).map(|v| v.iter()).into_iter().flatten();
            for m in got {
                prop_assert!(sends.any(|s| *s == m), "link {:?} reordered", link);
            }
        }
    }

    #[test]
    fn random_runs_are_safe_and_repeatable(sc in scenario()) {
        let a = sim::run(&sc).unwrap();
        prop_assert!(check_all(&a.trace, sc.algorithm).is_empty());
        let b = sim::run(&sc).unwrap();
        prop_assert_eq!(a.trace.to_ndjson(), b.trace.to_ndjson());
        prop_assert_eq!(a.metrics.to_kv(), b.metrics.to_kv());
    }
}
