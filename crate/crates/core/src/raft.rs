//! Raft leader election: one vote per term, the up-to-date check, and the
//! rule that a leader only counts replicas for entries of its own term.

use std::collections::BTreeSet;

use crate::message::{AppendEntriesReq, AppendEntriesResp, Effect, Message, RaftVoteReq, RaftVoteResp, TimerKind};
use crate::mutation::Mutation;
use crate::node::{CandidateState, Effects, Node, NodeFault, RaftCandidateState, RoleState};
use crate::types::{LogIndex, Role, ServerId, Term};

/// True when the candidate's last entry is at least as up to date as ours:
/// higher last term, or equal last term and at least as long.
pub fn raft_up_to_date(candidate_last: (LogIndex, Term), own_last: (LogIndex, Term)) -> bool {
    let (c_index, c_term) = candidate_last;
    let (o_index, o_term) = own_last;
    c_term > o_term || (c_term == o_term && c_index >= o_index)
}

impl Node {
    pub fn raft_start_election(&mut self, out: &mut Effects) -> Result<(), NodeFault> {
        let me = self.id();
        let st = &mut self.state;
        st.current_term = st.current_term.next();
        st.voted_for = Some(me);
        st.role = RoleState::Candidate(CandidateState::Raft(RaftCandidateState {
            votes: BTreeSet::from([me]),
        }));
        let (last_log_index, last_log_term) = st.log.last_info();
        out.push(Effect::RoleChange {
            role: Role::Candidate,
            term: st.current_term,
        });
        out.push(Effect::Broadcast(Message::RaftRequestVote(RaftVoteReq {
            term: st.current_term,
            candidate_id: me,
            last_log_index,
            last_log_term,
        })));
        out.push(Effect::ResetTimer(TimerKind::Election));
        if self.config.cluster.majority() == 1 {
            let next = self.state.log.len() + 1;
            self.become_leader(next, out)?;
        }
        Ok(())
    }

    pub fn raft_handle_request_vote(&mut self, req: RaftVoteReq, out: &mut Effects) -> RaftVoteResp {
        self.observe_term(req.term, out);
        let st = &self.state;
        let free = st.voted_for.is_none_or(|v| v == req.candidate_id)
            || self.config.mutated(Mutation::RaftNoVotedFor);
        let up_to_date = raft_up_to_date((req.last_log_index, req.last_log_term), st.log.last_info())
            || self.config.mutated(Mutation::RaftNoUpToDateCheck);
        let grant = req.term == st.current_term && free && up_to_date;
        if grant {
            self.state.voted_for = Some(req.candidate_id);
            out.push(Effect::ResetTimer(TimerKind::Election));
        }
        RaftVoteResp {
            term: self.state.current_term,
            vote_granted: grant,
        }
    }

    pub fn raft_handle_vote_response(
        &mut self,
        from: ServerId,
        resp: RaftVoteResp,
        out: &mut Effects,
    ) -> Result<(), NodeFault> {
        if self.observe_term(resp.term, out) {
            return Ok(());
        }
        if resp.term != self.state.current_term || !resp.vote_granted {
            return Ok(());
        }
        let majority = self.config.cluster.majority();
        let RoleState::Candidate(CandidateState::Raft(cs)) = &mut self.state.role else {
            return Ok(());
        };
        cs.votes.insert(from);
        if cs.votes.len() >= majority {
            let next = self.state.log.len() + 1;
            self.become_leader(next, out)?;
        }
        Ok(())
    }

    /// A candidate hearing from a leader of its own term (or newer) gives up.
    pub fn raft_on_append_entries_as_candidate(
        &mut self,
        from: ServerId,
        req: AppendEntriesReq,
        out: &mut Effects,
    ) -> Result<AppendEntriesResp, NodeFault> {
        if req.term == self.state.current_term {
            self.state.role = RoleState::Follower;
            out.push(Effect::RoleChange {
                role: Role::Follower,
                term: req.term,
            });
        }
        self.handle_append_entries(from, req, out)
    }

    pub fn raft_advance_commit(&mut self, out: &mut Effects) -> Result<(), NodeFault> {
        let unguarded = self.config.mutated(Mutation::RaftNoCommitTermGuard);
        let st = &self.state;
        let candidate = (st.commit_index + 1..=self.quorum_match())
            .rev()
            .find(|&n| unguarded || st.log.term_at(n) == Some(st.current_term));
        if let Some(n) = candidate {
            self.state.commit_index = n;
            self.apply_committed(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::Input;
    use crate::node::{LeaderState, NodeConfig};
    use crate::types::{Algorithm, ClusterConfig, Log, LogEntry, Operation};

    fn e(op: u64, term: u64) -> LogEntry {
        LogEntry::new(Operation(op), Term(term))
    }

    fn node(id: ServerId, n: usize) -> Node {
        Node::new(NodeConfig::new(id, ClusterConfig::new(n).unwrap(), Algorithm::Raft))
    }

    fn vote_req(term: u64, cand: ServerId, last: (u64, u64)) -> RaftVoteReq {
        RaftVoteReq {
            term: Term(term),
            candidate_id: cand,
            last_log_index: last.0,
            last_log_term: Term(last.1),
        }
    }

    #[test]
    fn up_to_date_examples() {
        assert!(raft_up_to_date((5, Term(3)), (4, Term(2))));
        assert!(!raft_up_to_date((3, Term(2)), (5, Term(2))));
        assert!(raft_up_to_date((4, Term(2)), (4, Term(2))));
        assert!(!raft_up_to_date((9, Term(1)), (1, Term(2))));
    }

    #[test]
    fn start_and_restart_election() {
        let mut nd = node(1, 3);
        nd.state.current_term = Term(4);
        nd.state.log = Log::from_entries(vec![e(1, 2), e(2, 3)]);
        let out = nd.step(Input::Timer(TimerKind::Election)).unwrap();
        assert_eq!(nd.state.current_term, Term(5));
        assert_eq!(nd.state.voted_for, Some(1));
        assert_eq!(out[0], Effect::Persist);
        assert!(out.contains(&Effect::Broadcast(Message::RaftRequestVote(vote_req(5, 1, (2, 3))))));
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        assert_eq!(nd.state.current_term, Term(6));
        assert_eq!(nd.role(), Role::Candidate);
    }

    #[test]
    fn singleton_wins_immediately() {
        let mut nd = node(0, 1);
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        assert_eq!(nd.role(), Role::Leader);
    }

    #[test]
    fn grants_once_per_term() {
        let mut nd = node(0, 3);
        nd.state.current_term = Term(3);
        let resp = nd.raft_handle_request_vote(vote_req(4, 1, (0, 0)), &mut vec![]);
        assert!(resp.vote_granted);
        assert_eq!(nd.state.voted_for, Some(1));
        assert_eq!(nd.state.current_term, Term(4));
        let resp = nd.raft_handle_request_vote(vote_req(4, 2, (0, 0)), &mut vec![]);
        assert!(!resp.vote_granted);
        // Re-asking by the same candidate is fine.
        assert!(nd.raft_handle_request_vote(vote_req(4, 1, (0, 0)), &mut vec![]).vote_granted);
    }

    #[test]
    fn stale_log_denied_but_term_adopted() {
        let mut nd = node(0, 3);
        nd.state.current_term = Term(3);
        nd.state.log = Log::from_entries(vec![e(1, 3)]);
        let resp = nd.raft_handle_request_vote(vote_req(7, 1, (5, 2)), &mut vec![]);
        assert!(!resp.vote_granted);
        assert_eq!(nd.state.current_term, Term(7));
        assert_eq!(nd.state.voted_for, None);
    }

    #[test]
    fn promotion_thresholds() {
        let mut nd = node(0, 3);
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        nd.raft_handle_vote_response(1, RaftVoteResp { term: Term(1), vote_granted: true }, &mut vec![])
            .unwrap();
        assert_eq!(nd.role(), Role::Leader);

        let mut nd = node(0, 5);
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        nd.raft_handle_vote_response(1, RaftVoteResp { term: Term(1), vote_granted: true }, &mut vec![])
            .unwrap();
        assert_eq!(nd.role(), Role::Candidate);
        for p in [2, 3] {
            nd.raft_handle_vote_response(p, RaftVoteResp { term: Term(1), vote_granted: false }, &mut vec![])
                .unwrap();
        }
        let RoleState::Candidate(CandidateState::Raft(cs)) = &nd.state.role else { panic!() };
        assert_eq!(cs.votes, BTreeSet::from([0, 1]));
    }

    #[test]
    fn leader_starts_with_optimistic_next_index() {
        let mut nd = node(0, 3);
        nd.state.log = Log::from_entries(vec![e(1, 0), e(2, 0)]);
        nd.step(Input::Timer(TimerKind::Election)).unwrap();
        nd.raft_handle_vote_response(2, RaftVoteResp { term: Term(1), vote_granted: true }, &mut vec![])
            .unwrap();
        let RoleState::Leader(ls) = &nd.state.role else { panic!() };
        assert_eq!(ls.next_index, vec![3, 3, 3]);
        assert_eq!(ls.match_index, vec![2, 0, 0]);
        assert_eq!(nd.state.log.len(), 2);
    }

    fn ae(term: u64) -> AppendEntriesReq {
        AppendEntriesReq {
            term: Term(term),
            leader_id: 2,
            prev_log_index: 0,
            prev_log_term: Term(0),
            entries: vec![e(9, term)],
            leader_commit: 0,
        }
    }

    #[test]
    fn candidate_yields_to_leader() {
        for (t, role, ok) in [(5, Role::Follower, true), (4, Role::Candidate, false), (7, Role::Follower, true)] {
            let mut nd = node(0, 3);
            nd.state.current_term = Term(4);
            nd.step(Input::Timer(TimerKind::Election)).unwrap();
            assert_eq!(nd.state.current_term, Term(5));
            let resp = nd.raft_on_append_entries_as_candidate(2, ae(t), &mut vec![]).unwrap();
            assert_eq!(nd.role(), role);
            assert_eq!(resp.success, ok);
            assert_eq!(nd.state.log.len(), ok as u64);
        }
    }

    fn leader(term: u64, log: Vec<LogEntry>, match_index: Vec<LogIndex>) -> Node {
        let mut nd = node(0, match_index.len());
        nd.state.current_term = Term(term);
        nd.state.log = Log::from_entries(log);
        nd.state.role = RoleState::Leader(LeaderState {
            next_index: vec![1; match_index.len()],
            match_index,
        });
        nd
    }

    #[test]
    fn commit_requires_current_term_entry() {
        let mut nd = leader(5, vec![e(1, 2), e(2, 5)], vec![2, 2, 0]);
        nd.raft_advance_commit(&mut vec![]).unwrap();
        assert_eq!(nd.state.commit_index, 2);

        let mut nd = leader(5, vec![e(1, 2)], vec![1, 1, 0]);
        nd.raft_advance_commit(&mut vec![]).unwrap();
        assert_eq!(nd.state.commit_index, 0);

        let mut nd = leader(5, vec![e(1, 2), e(2, 5)], vec![2, 1, 1]);
        nd.raft_advance_commit(&mut vec![]).unwrap();
        assert_eq!(nd.state.commit_index, 0);

        let mut nd = leader(5, vec![e(1, 2)], vec![1, 1, 0]);
        nd.config.mutations.enable(Mutation::RaftNoCommitTermGuard);
        nd.raft_advance_commit(&mut vec![]).unwrap();
        assert_eq!(nd.state.commit_index, 1);
    }

    #[test]
    fn mutations_relax_vote_rules() {
        let mut nd = node(0, 3);
        nd.config.mutations.enable(Mutation::RaftNoVotedFor);
        nd.state.current_term = Term(4);
        nd.state.voted_for = Some(1);
        assert!(nd.raft_handle_request_vote(vote_req(4, 2, (0, 0)), &mut vec![]).vote_granted);

        let mut nd = node(0, 3);
        nd.config.mutations.enable(Mutation::RaftNoUpToDateCheck);
        nd.state.log = Log::from_entries(vec![e(1, 3)]);
        assert!(nd.raft_handle_request_vote(vote_req(4, 2, (0, 0)), &mut vec![]).vote_granted);
    }
}
