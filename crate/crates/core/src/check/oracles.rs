//! Safety predicates evaluated over a finished trace.
//!
//! Every checker is a pure function of the trace. Witnesses are positions in
//! `trace.events`, which equal the events' `seq` numbers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::message::Message;
use crate::sim::{Event, Trace};
use crate::types::{Algorithm, Log, LogIndex, Operation, Role, ServerId, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    StateMachineSafety,
    LeaderCompleteness,
    ElectionSafety,
    LogMatching,
    CommittedOverwrite,
    VotePerTerm,
    TermPurity,
    /// A handler aborted with a [`crate::NodeFault`].
    InternalFault,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub witnesses: Vec<usize>,
    pub description: String,
}

impl Violation {
    fn new(kind: ViolationKind, witnesses: Vec<usize>, description: String) -> Self {
        Self { kind, witnesses, description }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: Vec<String> = self.witnesses.iter().map(|w| w.to_string()).collect();
        write!(f, "{} [events {}]: {}", self.kind, w.join(","), self.description)
    }
}

/// No two `ApplyOp` events for the same index carry different operations.
pub fn check_state_machine_safety(trace: &Trace) -> Vec<Violation> {
    let mut first: HashMap<LogIndex, (usize, ServerId, Operation)> = HashMap::new();
    let mut out = Vec::new();
    for (i, ev) in trace.iter().enumerate() {
        if let Event::ApplyOp { server, index, op, .. } = ev.event {
            match first.get(&index) {
                None => {
                    first.insert(index, (i, server, op));
                }
                Some(&(j, s0, op0)) if op0 != op => out.push(Violation::new(
                    ViolationKind::StateMachineSafety,
                    vec![j, i],
                    format!("index {index}: s{s0} applied {op0}, s{server} applied {op}"),
                )),
                Some(_) => {}
            }
        }
    }
    out
}

/// Every leader of a term above `t` holds each operation a leader of `t`
/// committed, at the same index. Order in the trace does not matter.
pub fn check_leader_completeness(trace: &Trace) -> Vec<Violation> {
    let mut commits: Vec<(usize, Term, LogIndex, Operation)> = Vec::new();
    let mut seen_commits = BTreeSet::new();
    let mut leaders: Vec<(usize, ServerId, Term, &Log)> = Vec::new();
    for (i, ev) in trace.iter().enumerate() {
        match &ev.event {
            Event::ApplyOp { index, op, term, by_leader: true, .. } => {
                if seen_commits.insert((*term, *index, *op)) {
                    commits.push((i, *term, *index, *op));
                }
            }
            Event::RoleChange { server, role: Role::Leader, term, log: Some(log), .. } => {
                leaders.push((i, *server, *term, log));
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    for &(ci, t, index, op) in &commits {
        for &(li, server, lt, log) in &leaders {
            if lt > t && log.get(index).map(|e| e.op) != Some(op) {
                out.push(Violation::new(
                    ViolationKind::LeaderCompleteness,
                    vec![ci, li],
                    format!(
                        "{op} committed at index {index} in term {t}, but s{server} leads term {lt} with {}",
                        describe_slot(log, index)
                    ),
                ));
            }
        }
    }
    out
}

/// At most one server is promoted per term.
pub fn check_election_safety(trace: &Trace) -> Vec<Violation> {
    let mut by_term: BTreeMap<Term, (usize, ServerId)> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, ev) in trace.iter().enumerate() {
        if let Event::RoleChange { server, role: Role::Leader, term, .. } = ev.event {
            match by_term.get(&term) {
                None => {
                    by_term.insert(term, (i, server));
                }
                Some(&(j, other)) if other != server => out.push(Violation::new(
                    ViolationKind::ElectionSafety,
                    vec![j, i],
                    format!("s{other} and s{server} both lead term {term}"),
                )),
                Some(_) => {}
            }
        }
    }
    out
}

/// The per-algorithm log property: prefix matching for Raft, committed
/// overwrite for Paxos.
pub fn check_log_matching(trace: &Trace, algorithm: Algorithm) -> Vec<Violation> {
    match algorithm {
        Algorithm::Paxos => check_committed_overwrite(trace),
        Algorithm::Raft => check_raft_log_matching(trace),
    }
}

/// First index at which two logs break the matching property: an equal
/// `(index, term)` pair whose prefixes differ. `None` when consistent.
pub fn log_matching_conflict(a: &Log, b: &Log) -> Option<LogIndex> {
    let common = a.len().min(b.len());
    let top = (1..=common).rev().find(|&i| a.term_at(i) == b.term_at(i))?;
    (1..=top).find(|&i| a.get(i) != b.get(i))
}

/// An operation present in both logs must sit at the same `(index, term)`.
pub fn misplaced_operation(a: &Log, b: &Log) -> Option<Operation> {
    a.iter().find_map(|(i, e)| match b.position_of(e.op) {
        Some(j) if j != i || b.term_at(j) != Some(e.term) => Some(e.op),
        _ => None,
    })
}

fn check_raft_log_matching(trace: &Trace) -> Vec<Violation> {
    let mut logs: BTreeMap<ServerId, (usize, &Log)> = BTreeMap::new();
    let mut reported = BTreeSet::new();
    let mut out = Vec::new();
    for (i, ev) in trace.iter().enumerate() {
        let (server, log) = match &ev.event {
            Event::PersistWrite { server, log, .. } | Event::Restart { server, log, .. } => (*server, log),
            Event::RoleChange { server, log: Some(log), .. } => (*server, log),
            _ => continue,
        };
        logs.insert(server, (i, log));
        for (&other, &(j, olog)) in &logs {
            if other == server {
                continue;
            }
            let key = (server.min(other), server.max(other));
            if let Some(index) = log_matching_conflict(log, olog) {
                if reported.insert((key, index)) {
                    out.push(Violation::new(
                        ViolationKind::LogMatching,
                        vec![j, i],
                        format!("s{other} and s{server} agree on the term at some index but differ at index {index}"),
                    ));
                }
            } else if let Some(op) = misplaced_operation(log, olog) {
                if reported.insert((key, u64::MAX - op.0)) {
                    out.push(Violation::new(
                        ViolationKind::LogMatching,
                        vec![j, i],
                        format!("{op} sits at different (index, term) on s{other} and s{server}"),
                    ));
                }
            }
        }
    }
    out
}

/// Once an operation is known committed at an index, no server holding it
/// there may replace or drop it.
pub fn check_committed_overwrite(trace: &Trace) -> Vec<Violation> {
    let mut committed: BTreeMap<LogIndex, (usize, Operation)> = BTreeMap::new();
    let mut logs: BTreeMap<ServerId, &Log> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, ev) in trace.iter().enumerate() {
        match &ev.event {
            Event::ApplyOp { index, op, .. } => {
                committed.entry(*index).or_insert((i, *op));
            }
            Event::PersistWrite { server, log, .. } => {
                if let Some(old) = logs.insert(*server, log) {
                    for (&index, &(ci, op)) in &committed {
                        let had = old.get(index).map(|e| e.op) == Some(op);
                        if had && log.get(index).map(|e| e.op) != Some(op) {
                            out.push(Violation::new(
                                ViolationKind::CommittedOverwrite,
                                vec![ci, i],
                                format!("s{server} replaced committed {op} at index {index} with {}", describe_slot(log, index)),
                            ));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Granted votes per `(voter, term)` name a single candidate.
pub fn check_vote_per_term(trace: &Trace) -> Vec<Violation> {
    let mut votes: BTreeMap<(ServerId, Term), (usize, ServerId)> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, ev) in trace.iter().enumerate() {
        let Event::SendMsg { from, to, msg } = &ev.event else { continue };
        let term = match msg {
            Message::RaftRequestVoteResp(r) if r.vote_granted => r.term,
            Message::PaxosRequestVoteResp(r) if r.vote_granted => r.term,
            _ => continue,
        };
        match votes.get(&(*from, term)) {
            None => {
                votes.insert((*from, term), (i, *to));
            }
            Some(&(j, cand)) if cand != *to => out.push(Violation::new(
                ViolationKind::VotePerTerm,
                vec![j, i],
                format!("s{from} voted for s{cand} and s{to} in term {term}"),
            )),
            Some(_) => {}
        }
    }
    out
}

/// A Raft entry keeps its term for as long as it stays at its index.
pub fn check_term_purity(trace: &Trace) -> Vec<Violation> {
    let mut logs: BTreeMap<ServerId, (usize, &Log)> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, ev) in trace.iter().enumerate() {
        let Event::PersistWrite { server, log, .. } = &ev.event else { continue };
        if let Some((j, old)) = logs.insert(*server, (i, log)) {
            for (index, e) in old.iter() {
                if let Some(now) = log.get(index) {
                    if now.op == e.op && now.term != e.term {
                        out.push(Violation::new(
                            ViolationKind::TermPurity,
                            vec![j, i],
                            format!("s{server} changed {} at index {index} to term {}", e, now.term),
                        ));
                    }
                }
            }
        }
    }
    out
}

pub fn check_internal_faults(trace: &Trace) -> Vec<Violation> {
    trace
        .iter()
        .enumerate()
        .filter_map(|(i, ev)| match &ev.event {
            Event::InternalFault { fault } => {
                Some(Violation::new(ViolationKind::InternalFault, vec![i], fault.to_string()))
            }
            _ => None,
        })
        .collect()
}

/// Every checker that applies to `algorithm`, in a fixed order.
pub fn check_all(trace: &Trace, algorithm: Algorithm) -> Vec<Violation> {
    let mut out = check_state_machine_safety(trace);
    out.extend(check_leader_completeness(trace));
    out.extend(check_election_safety(trace));
    out.extend(check_log_matching(trace, algorithm));
    out.extend(check_vote_per_term(trace));
    if algorithm == Algorithm::Raft {
        out.extend(check_term_purity(trace));
    }
    out.extend(check_internal_faults(trace));
    out
}

fn describe_slot(log: &Log, index: LogIndex) -> String {
    match log.get(index) {
        Some(e) => format!("{e} there"),
        None => format!("a log of length {}", log.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::RaftVoteResp;
    use crate::types::LogEntry;

    fn log(entries: &[(u64, u64)]) -> Log {
        Log::from_entries(entries.iter().map(|&(op, t)| LogEntry::new(Operation(op), Term(t))).collect())
    }

    fn apply(t: &mut Trace, server: ServerId, index: LogIndex, op: u64, term: u64, by_leader: bool) {
        t.push(
            0,
            Event::ApplyOp {
                server,
                index,
                op: Operation(op),
                entry_term: Term(term),
                term: Term(term),
                by_leader,
            },
        );
    }

    fn lead(t: &mut Trace, server: ServerId, term: u64, l: Log) {
        t.push(
            0,
            Event::RoleChange { server, role: Role::Leader, term: Term(term), commit_index: 0, log: Some(l) },
        );
    }

    fn persist(t: &mut Trace, server: ServerId, l: Log) {
        t.push(0, Event::PersistWrite { server, term: Term(9), voted_for: None, log: l });
    }

    #[test]
    fn sms_same_op_ok_different_op_flagged() {
        let mut t = Trace::new();
        apply(&mut t, 1, 3, 1, 1, true);
        apply(&mut t, 2, 3, 1, 1, false);
        assert!(check_state_machine_safety(&t).is_empty());
        apply(&mut t, 2, 3, 2, 1, false);
        let v = check_state_machine_safety(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].witnesses, vec![0, 2]);
    }

    #[test]
    fn election_safety_two_leaders_same_term() {
        let mut t = Trace::new();
        lead(&mut t, 0, 7, Log::new());
        lead(&mut t, 0, 7, Log::new());
        assert!(check_election_safety(&t).is_empty());
        lead(&mut t, 2, 7, Log::new());
        assert_eq!(check_election_safety(&t).len(), 1);
    }

    #[test]
    fn leader_completeness_is_order_independent() {
        let mut t = Trace::new();
        assert!(check_leader_completeness(&t).is_empty());
        lead(&mut t, 1, 4, log(&[(1, 4)]));
        apply(&mut t, 0, 1, 1, 3, true);
        lead(&mut t, 2, 5, log(&[(2, 5)]));
        let v = check_leader_completeness(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].witnesses, vec![1, 2]);
    }

    #[test]
    fn raft_prefix_mismatch_detected() {
        let mut t = Trace::new();
        persist(&mut t, 0, log(&[(1, 1), (2, 2)]));
        persist(&mut t, 1, log(&[(1, 1), (2, 2), (3, 2)]));
        assert!(check_log_matching(&t, Algorithm::Raft).is_empty());
        persist(&mut t, 2, log(&[(9, 1), (2, 2)]));
        let v = check_log_matching(&t, Algorithm::Raft);
        assert!(!v.is_empty());
        assert!(v.iter().all(|v| v.kind == ViolationKind::LogMatching));
    }

    #[test]
    fn paxos_rewrite_above_commit_point_is_legal() {
        let mut t = Trace::new();
        persist(&mut t, 0, log(&[(1, 1), (2, 1)]));
        apply(&mut t, 0, 1, 1, 1, true);
        persist(&mut t, 0, log(&[(1, 2), (2, 2)]));
        persist(&mut t, 0, log(&[(1, 2), (3, 2)]));
        assert!(check_log_matching(&t, Algorithm::Paxos).is_empty());
        persist(&mut t, 0, log(&[(4, 3)]));
        assert_eq!(check_committed_overwrite(&t).len(), 1);
    }

    #[test]
    fn double_vote_and_term_change() {
        let mut t = Trace::new();
        let vote = |to| Event::SendMsg {
            from: 2,
            to,
            msg: Message::RaftRequestVoteResp(RaftVoteResp { term: Term(3), vote_granted: true }),
        };
        t.push(0, vote(0));
        t.push(0, vote(0));
        assert!(check_vote_per_term(&t).is_empty());
        t.push(0, vote(1));
        assert_eq!(check_vote_per_term(&t).len(), 1);

        let mut t = Trace::new();
        persist(&mut t, 0, log(&[(1, 1)]));
        persist(&mut t, 0, log(&[(1, 1), (2, 2)]));
        assert!(check_term_purity(&t).is_empty());
        persist(&mut t, 0, log(&[(1, 2), (2, 2)]));
        assert_eq!(check_term_purity(&t).len(), 1);
    }

    #[test]
    fn conflict_helpers() {
        assert_eq!(log_matching_conflict(&log(&[(1, 1), (2, 2)]), &log(&[(9, 1), (2, 2)])), Some(1));
        assert_eq!(log_matching_conflict(&log(&[(1, 1)]), &log(&[(2, 2)])), None);
        assert_eq!(misplaced_operation(&log(&[(1, 1)]), &log(&[(5, 1), (1, 2)])), Some(Operation(1)));
    }
}
