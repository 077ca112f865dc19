//! Raft-style MultiPaxos leader election.
//!
//! Terms are divided between servers by residue, votes carry the voter's log
//! suffix, and a winning candidate adopts the greatest-term entry for each
//! index it heard about, rewriting every one of them into its own term.

use std::collections::{BTreeMap, BTreeSet};

use crate::message::{Effect, Message, PaxosVoteReq, PaxosVoteResp, TimerKind};
use crate::mutation::Mutation;
use crate::node::{CandidateState, Effects, Node, NodeFault, PaxosCandidateState, RoleState};
use crate::types::{LogEntry, LogIndex, Role, ServerId, Term};

/// Smallest term above `current` owned by server `s` in an `n`-server cluster.
pub fn next_candidate_term(current: Term, n: usize, s: ServerId) -> Term {
    assert!(n >= 1 && s < n, "server {s} outside cluster of {n}");
    let n = n as u64;
    let t = current.0 + 1;
    Term(t + (s as u64 + n - t % n) % n)
}

impl Node {
    pub fn paxos_start_election(&mut self, out: &mut Effects) -> Result<(), NodeFault> {
        let me = self.id();
        let st = &mut self.state;
        st.current_term = next_candidate_term(st.current_term, self.config.cluster.n(), me);
        let commit_snapshot = st.commit_index.min(st.log.len());
        let mut entries_seen: BTreeMap<LogIndex, Vec<LogEntry>> = BTreeMap::new();
        for (i, e) in st.log.iter().filter(|(i, _)| *i > commit_snapshot) {
            entries_seen.entry(i).or_default().push(*e);
        }
        st.role = RoleState::Candidate(CandidateState::Paxos(PaxosCandidateState {
            votes: BTreeSet::from([me]),
            commit_snapshot,
            entries_seen,
        }));
        out.push(Effect::RoleChange {
            role: Role::Candidate,
            term: st.current_term,
        });
        out.push(Effect::Broadcast(Message::PaxosRequestVote(PaxosVoteReq {
            term: st.current_term,
            leader_commit: commit_snapshot,
        })));
        out.push(Effect::ResetTimer(TimerKind::Election));
        if self.config.cluster.majority() == 1 {
            self.paxos_merge_and_promote(out)?;
        }
        Ok(())
    }

    /// Grant any candidate with a higher term and hand over the log suffix.
    pub fn paxos_handle_request_vote(&mut self, req: PaxosVoteReq, out: &mut Effects) -> PaxosVoteResp {
        if req.term <= self.state.current_term {
            return PaxosVoteResp {
                term: self.state.current_term,
                vote_granted: false,
                entries: Vec::new(),
            };
        }
        self.observe_term(req.term, out);
        out.push(Effect::ResetTimer(TimerKind::Election));
        let entries = self
            .state
            .log
            .iter()
            .filter(|(i, _)| *i > req.leader_commit)
            .map(|(i, e)| (i, *e))
            .collect();
        PaxosVoteResp {
            term: self.state.current_term,
            vote_granted: true,
            entries,
        }
    }

    pub fn paxos_handle_vote_response(
        &mut self,
        from: ServerId,
        resp: PaxosVoteResp,
        out: &mut Effects,
    ) -> Result<(), NodeFault> {
        if self.observe_term(resp.term, out) {
            return Ok(());
        }
        if resp.term != self.state.current_term || !resp.vote_granted {
            return Ok(());
        }
        let majority = self.config.cluster.majority();
        let RoleState::Candidate(CandidateState::Paxos(cs)) = &mut self.state.role else {
            return Ok(());
        };
        cs.votes.insert(from);
        for (i, e) in resp.entries {
            if i <= cs.commit_snapshot {
                continue;
            }
            let seen = cs.entries_seen.entry(i).or_default();
            if !seen.contains(&e) {
                seen.push(e);
            }
        }
        if cs.votes.len() >= majority {
            self.paxos_merge_and_promote(out)?;
        }
        Ok(())
    }

    /// Rebuild the log above the commit snapshot from the entries seen, then lead.
    pub fn paxos_merge_and_promote(&mut self, out: &mut Effects) -> Result<(), NodeFault> {
        let me = self.id();
        let pick_first = self.config.mutated(Mutation::PaxosPickFirstNotGreatest);
        let keep_term = self.config.mutated(Mutation::PaxosNoTermRewrite);
        let cs = match std::mem::replace(&mut self.state.role, RoleState::Follower) {
            RoleState::Candidate(CandidateState::Paxos(cs)) => cs,
            other => {
                self.state.role = other;
                return Ok(());
            }
        };
        let st = &mut self.state;
        let term = st.current_term;
        let mut expected = cs.commit_snapshot + 1;
        for (index, seen) in &cs.entries_seen {
            if *index != expected {
                return Err(NodeFault::NonContiguousMerge {
                    server: me,
                    expected,
                    found: *index,
                });
            }
            let chosen = if pick_first {
                seen[0]
            } else {
                greatest_term(me, *index, seen)?
            };
            let merged = LogEntry::new(chosen.op, if keep_term { chosen.term } else { term });
            if *index <= st.log.len() {
                st.log.set(*index, merged);
            } else {
                st.log.push(merged);
            }
            expected += 1;
        }
        // Every own entry above the snapshot was seeded, so this drops nothing
        // the merge did not already cover.
        st.log.truncate(expected - 1);
        self.become_leader(cs.commit_snapshot + 1, out)
    }

    pub fn paxos_advance_commit(&mut self, out: &mut Effects) -> Result<(), NodeFault> {
        let n = self.quorum_match();
        if n > self.state.commit_index {
            self.state.commit_index = n;
            self.apply_committed(out)?;
        }
        Ok(())
    }
}

fn greatest_term(server: ServerId, index: LogIndex, seen: &[LogEntry]) -> Result<LogEntry, NodeFault> {
    let mut best = seen[0];
    for &e in &seen[1..] {
        if e.term > best.term {
            best = e;
        } else if e.term == best.term && e.op != best.op {
            return Err(NodeFault::MergeTie {
                server,
                index,
                term: e.term,
                a: best,
                b: e,
            });
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::Input;
    use crate::node::{LeaderState, NodeConfig};
    use crate::types::{Algorithm, ClusterConfig, Log, Operation};

    fn e(op: u64, term: u64) -> LogEntry {
        LogEntry::new(Operation(op), Term(term))
    }

    fn node(id: ServerId, n: usize) -> Node {
        Node::new(NodeConfig::new(id, ClusterConfig::new(n).unwrap(), Algorithm::Paxos))
    }

    fn candidate(term: u64, commit: LogIndex, log: Vec<LogEntry>, seen: Vec<(LogIndex, Vec<LogEntry>)>) -> Node {
        let mut nd = node(0, 3);
        nd.state.current_term = Term(term);
        nd.state.log = Log::from_entries(log);
        nd.state.commit_index = commit;
        nd.state.last_applied = commit;
        nd.state.role = RoleState::Candidate(CandidateState::Paxos(PaxosCandidateState {
            votes: BTreeSet::from([0, 1]),
            commit_snapshot: commit,
            entries_seen: seen.into_iter().collect(),
        }));
        nd
    }

    #[test]
    fn next_candidate_term_examples() {
        assert_eq!(next_candidate_term(Term(3), 3, 1), Term(4));
        assert_eq!(next_candidate_term(Term(0), 3, 0), Term(3));
        assert_eq!(next_candidate_term(Term(4), 5, 2), Term(7));
        assert_eq!(next_candidate_term(Term(0), 1, 0), Term(1));
    }

    #[test]
    fn start_election_seeds_own_suffix() {
        let mut nd = node(2, 3);
        nd.state.current_term = Term(4);
        nd.state.log = Log::from_entries(vec![e(1, 1), e(2, 4)]);
        nd.state.commit_index = 1;
        let out = nd.step(Input::Timer(TimerKind::Election)).unwrap();
        assert_eq!(nd.state.current_term, Term(5));
        let RoleState::Candidate(CandidateState::Paxos(cs)) = &nd.state.role else { panic!() };
        assert_eq!(cs.entries_seen, BTreeMap::from([(2, vec![e(2, 4)])]));
        assert_eq!(out[0], Effect::Persist);
        assert!(out.contains(&Effect::Broadcast(Message::PaxosRequestVote(PaxosVoteReq {
            term: Term(5),
            leader_commit: 1
        }))));
        assert_eq!(nd.state.voted_for, None);
    }

    #[test]
    fn singleton_wins_immediately() {
        let mut nd = node(0, 1);
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        assert_eq!(nd.role(), Role::Leader);
        assert_eq!(nd.state.current_term, Term(1));
    }

    #[test]
    fn empty_log_seeds_nothing() {
        let mut nd = node(1, 3);
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        let RoleState::Candidate(CandidateState::Paxos(cs)) = &nd.state.role else { panic!() };
        assert!(cs.entries_seen.is_empty());
    }

    #[test]
    fn vote_grant_ships_suffix() {
        let mut nd = node(1, 3);
        nd.state.current_term = Term(3);
        nd.state.log = Log::from_entries(vec![e(1, 1), e(2, 2)]);
        nd.state.commit_index = 1;
        let mut out = vec![];
        let resp = nd.paxos_handle_request_vote(PaxosVoteReq { term: Term(5), leader_commit: 1 }, &mut out);
        assert!(resp.vote_granted);
        assert_eq!(resp.entries, vec![(2, e(2, 2))]);
        assert_eq!(nd.state.current_term, Term(5));
        assert!(out.contains(&Effect::ResetTimer(TimerKind::Election)));
    }

    #[test]
    fn vote_denied_for_stale_or_equal_term() {
        for t in [5, 6] {
            let mut nd = node(1, 3);
            nd.state.current_term = Term(6);
            let resp = nd.paxos_handle_request_vote(PaxosVoteReq { term: Term(t), leader_commit: 0 }, &mut vec![]);
            assert!(!resp.vote_granted);
            assert_eq!(resp.term, Term(6));
        }
    }

    #[test]
    fn short_voter_log_grants_with_nothing() {
        let mut nd = node(1, 3);
        nd.state.log = Log::from_entries(vec![e(1, 1)]);
        let resp = nd.paxos_handle_request_vote(PaxosVoteReq { term: Term(2), leader_commit: 3 }, &mut vec![]);
        assert!(resp.vote_granted);
        assert!(resp.entries.is_empty());
    }

    #[test]
    fn majority_response_promotes() {
        let mut nd = node(0, 3);
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        let resp = PaxosVoteResp { term: Term(3), vote_granted: true, entries: vec![] };
        nd.paxos_handle_vote_response(2, resp, &mut vec![]).unwrap();
        assert_eq!(nd.role(), Role::Leader);
    }

    #[test]
    fn duplicate_response_does_not_double_count() {
        let mut nd = node(0, 5);
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        let resp = PaxosVoteResp { term: Term(5), vote_granted: true, entries: vec![(1, e(7, 2))] };
        nd.paxos_handle_vote_response(2, resp.clone(), &mut vec![]).unwrap();
        nd.paxos_handle_vote_response(2, resp, &mut vec![]).unwrap();
        let RoleState::Candidate(CandidateState::Paxos(cs)) = &nd.state.role else { panic!() };
        assert_eq!(cs.votes.len(), 2);
        assert_eq!(cs.entries_seen[&1], vec![e(7, 2)]);
    }

    #[test]
    fn higher_term_response_steps_down() {
        let mut nd = node(0, 3);
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        let resp = PaxosVoteResp { term: Term(8), vote_granted: false, entries: vec![] };
        nd.paxos_handle_vote_response(1, resp, &mut vec![]).unwrap();
        assert_eq!(nd.role(), Role::Follower);
        assert_eq!(nd.state.current_term, Term(8));
    }

    #[test]
    fn merge_takes_greatest_term_and_rewrites() {
        let mut nd = candidate(4, 1, vec![e(1, 1), e(2, 2)], vec![(2, vec![e(2, 2), e(3, 3)])]);
        nd.paxos_merge_and_promote(&mut vec![]).unwrap();
        assert_eq!(nd.state.log.entries(), &[e(1, 1), e(3, 4)]);
        assert_eq!(nd.role(), Role::Leader);
        let RoleState::Leader(LeaderState { next_index, match_index }) = &nd.state.role else { panic!() };
        assert_eq!(next_index, &vec![2, 2, 2]);
        assert_eq!(match_index, &vec![2, 0, 0]);
    }

    #[test]
    fn merge_extends_log() {
        let mut nd = candidate(5, 1, vec![e(1, 1)], vec![(2, vec![e(2, 2)]), (3, vec![e(4, 2)])]);
        nd.paxos_merge_and_promote(&mut vec![]).unwrap();
        assert_eq!(nd.state.log.entries(), &[e(1, 1), e(2, 5), e(4, 5)]);
    }

    #[test]
    fn merge_with_nothing_seen_keeps_log() {
        let mut nd = candidate(5, 1, vec![e(1, 1)], vec![]);
        nd.paxos_merge_and_promote(&mut vec![]).unwrap();
        assert_eq!(nd.state.log.entries(), &[e(1, 1)]);
        assert_eq!(nd.role(), Role::Leader);
    }

    #[test]
    fn merge_faults_on_gap_and_tie() {
        let mut nd = candidate(5, 1, vec![e(1, 1)], vec![(3, vec![e(2, 2)])]);
        assert!(matches!(
            nd.paxos_merge_and_promote(&mut vec![]),
            Err(NodeFault::NonContiguousMerge { expected: 2, found: 3, .. })
        ));
        let mut nd = candidate(5, 1, vec![e(1, 1)], vec![(2, vec![e(2, 2), e(3, 2)])]);
        assert!(matches!(nd.paxos_merge_and_promote(&mut vec![]), Err(NodeFault::MergeTie { .. })));
    }

    #[test]
    fn mutations_change_the_pick() {
        let seen = vec![(2, vec![e(2, 2), e(3, 3)])];
        let mut nd = candidate(4, 1, vec![e(1, 1), e(2, 2)], seen.clone());
        nd.config.mutations.enable(Mutation::PaxosPickFirstNotGreatest);
        nd.paxos_merge_and_promote(&mut vec![]).unwrap();
        assert_eq!(nd.state.log.entries(), &[e(1, 1), e(2, 4)]);

        let mut nd = candidate(4, 1, vec![e(1, 1), e(2, 2)], seen);
        nd.config.mutations.enable(Mutation::PaxosNoTermRewrite);
        nd.paxos_merge_and_promote(&mut vec![]).unwrap();
        assert_eq!(nd.state.log.entries(), &[e(1, 1), e(3, 3)]);
    }

    #[test]
    fn advance_commit_examples() {
        let cases: [(usize, Vec<LogIndex>, LogIndex, LogIndex); 3] = [
            (3, vec![3, 3, 1], 1, 3),
            (3, vec![3, 1, 1], 1, 1),
            (5, vec![5, 5, 5, 0, 0], 0, 5),
        ];
        for (n, match_index, commit, want) in cases {
            let mut nd = node(0, n);
            nd.state.current_term = Term(n as u64);
            nd.state.log = Log::from_entries(vec![e(1, 1); match_index[0] as usize]);
            nd.state.commit_index = commit;
            nd.state.last_applied = commit;
            nd.state.role = RoleState::Leader(LeaderState {
                next_index: vec![1; n],
                match_index,
            });
            nd.paxos_advance_commit(&mut vec![]).unwrap();
            assert_eq!(nd.state.commit_index, want);
        }
    }
}
