//! Per-server consensus state and the pure `step` entry point.
//!
//! A [`Node`] never reads a clock or a random source. Everything it does is a
//! function of its current state and one [`Input`], and everything it wants
//! the outside world to do comes back as a list of [`Effect`]s.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::message::{Effect, Input, Message, TimerKind};
use crate::mutation::{Mutation, Mutations};
use crate::types::{Algorithm, ClusterConfig, Log, LogEntry, LogIndex, Role, ServerId, Term};

/// Static configuration of one server.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeConfig {
    pub id: ServerId,
    pub cluster: ClusterConfig,
    pub algorithm: Algorithm,
    /// Maximum entries per AppendEntries request; `None` sends the whole suffix.
    pub batch_cap: Option<usize>,
    pub mutations: Mutations,
}

impl NodeConfig {
    pub fn new(id: ServerId, cluster: ClusterConfig, algorithm: Algorithm) -> Self {
        Self {
            id,
            cluster,
            algorithm,
            batch_cap: None,
            mutations: Mutations::none(),
        }
    }

    pub fn mutated(&self, m: Mutation) -> bool {
        self.mutations.is_enabled(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeaderState {
    /// Indexed by server id.
    pub next_index: Vec<LogIndex>,
    pub match_index: Vec<LogIndex>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PaxosCandidateState {
    pub votes: BTreeSet<ServerId>,
    /// Commit index captured when the election started; the merge covers indices above it.
    pub commit_snapshot: LogIndex,
    /// Entries reported per index, in first-seen order, without duplicates.
    pub entries_seen: BTreeMap<LogIndex, Vec<LogEntry>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RaftCandidateState {
    pub votes: BTreeSet<ServerId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CandidateState {
    Paxos(PaxosCandidateState),
    Raft(RaftCandidateState),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoleState {
    Follower,
    Candidate(CandidateState),
    Leader(LeaderState),
}

/// State that survives a crash.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Persistent {
    pub current_term: Term,
    /// Raft only; always `None` under Paxos.
    pub voted_for: Option<ServerId>,
    pub log: Log,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeState {
    pub current_term: Term,
    pub voted_for: Option<ServerId>,
    pub log: Log,
    pub commit_index: LogIndex,
    pub last_applied: LogIndex,
    pub role: RoleState,
}

impl Default for NodeState {
    fn default() -> Self {
        Self {
            current_term: Term::ZERO,
            voted_for: None,
            log: Log::new(),
            commit_index: 0,
            last_applied: 0,
            role: RoleState::Follower,
        }
    }
}

impl NodeState {
    pub fn role(&self) -> Role {
        match self.role {
            RoleState::Follower => Role::Follower,
            RoleState::Candidate(_) => Role::Candidate,
            RoleState::Leader(_) => Role::Leader,
        }
    }

    pub fn persistent(&self) -> Persistent {
        Persistent {
            current_term: self.current_term,
            voted_for: self.voted_for,
            log: self.log.clone(),
        }
    }

    fn persistent_eq(&self, p: &Persistent) -> bool {
        self.current_term == p.current_term && self.voted_for == p.voted_for && self.log == p.log
    }

    pub fn from_persistent(p: Persistent) -> Self {
        Self {
            current_term: p.current_term,
            voted_for: p.voted_for,
            log: p.log,
            ..Self::default()
        }
    }
}

/// Algorithm bugs detected inside a handler. Any of these aborts a run.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum NodeFault {
    #[error("server {server}: commit index {commit_index} exceeds log length {log_len}")]
    CommitBeyondLog {
        server: ServerId,
        commit_index: LogIndex,
        log_len: LogIndex,
    },
    #[error("server {server}: leader or candidate of term {term} got AppendEntries from {from} in the same term")]
    ConflictingLeader {
        server: ServerId,
        from: ServerId,
        term: Term,
    },
    #[error("server {server}: distinct operations {a} and {b} share index {index} and term {term}")]
    MergeTie {
        server: ServerId,
        index: LogIndex,
        term: Term,
        a: LogEntry,
        b: LogEntry,
    },
    #[error("server {server}: merged indices are not contiguous (expected {expected}, got {found})")]
    NonContiguousMerge {
        server: ServerId,
        expected: LogIndex,
        found: LogIndex,
    },
}

impl NodeFault {
    pub fn server(&self) -> ServerId {
        match *self {
            NodeFault::CommitBeyondLog { server, .. }
            | NodeFault::ConflictingLeader { server, .. }
            | NodeFault::MergeTie { server, .. }
            | NodeFault::NonContiguousMerge { server, .. } => server,
        }
    }
}

pub type Effects = Vec<Effect>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub config: NodeConfig,
    pub state: NodeState,
}

impl Node {
    pub fn new(config: NodeConfig) -> Self {
        Self {
            config,
            state: NodeState::default(),
        }
    }

    pub fn with_state(config: NodeConfig, state: NodeState) -> Self {
        Self { config, state }
    }

    pub fn id(&self) -> ServerId {
        self.config.id
    }

    pub fn role(&self) -> Role {
        self.state.role()
    }

    pub fn is_leader(&self) -> bool {
        matches!(self.state.role, RoleState::Leader(_))
    }

    /// Feed one input through the node. A `Persist` effect is placed first
    /// whenever the persistent fields changed, so it precedes every send.
    pub fn step(&mut self, input: Input) -> Result<Effects, NodeFault> {
        let before = self.state.persistent();
        let mut out = Vec::new();
        match input {
            Input::Deliver { from, msg } => self.deliver(from, msg, &mut out)?,
            Input::Timer(TimerKind::Election) => {
                if !self.is_leader() {
                    self.start_election(&mut out)?;
                }
            }
            Input::Timer(TimerKind::Heartbeat) => {
                if self.is_leader() {
                    self.leader_tick(&mut out);
                    out.push(Effect::ResetTimer(TimerKind::Heartbeat));
                }
            }
            Input::ClientRequest(op) => self.handle_client_request(op, &mut out)?,
            Input::Restart => self.restart(&mut out),
        }
        if !self.state.persistent_eq(&before) {
            out.insert(0, Effect::Persist);
        }
        Ok(out)
    }

    fn deliver(&mut self, from: ServerId, msg: Message, out: &mut Effects) -> Result<(), NodeFault> {
        match (self.config.algorithm, msg) {
            (Algorithm::Raft, Message::AppendEntries(req))
                if matches!(self.state.role, RoleState::Candidate(_)) =>
            {
                let resp = self.raft_on_append_entries_as_candidate(from, req, out)?;
                out.push(Effect::Send {
                    to: from,
                    msg: Message::AppendEntriesResp(resp),
                });
            }
            (_, Message::AppendEntries(req)) => {
                let resp = self.handle_append_entries(from, req, out)?;
                out.push(Effect::Send {
                    to: from,
                    msg: Message::AppendEntriesResp(resp),
                });
            }
            (_, Message::AppendEntriesResp(resp)) => {
                self.handle_append_entries_response(from, resp, out)?
            }
            (Algorithm::Paxos, Message::PaxosRequestVote(req)) => {
                let resp = self.paxos_handle_request_vote(req, out);
                out.push(Effect::Send {
                    to: from,
                    msg: Message::PaxosRequestVoteResp(resp),
                });
            }
            (Algorithm::Paxos, Message::PaxosRequestVoteResp(resp)) => {
                self.paxos_handle_vote_response(from, resp, out)?
            }
            (Algorithm::Raft, Message::RaftRequestVote(req)) => {
                let resp = self.raft_handle_request_vote(req, out);
                out.push(Effect::Send {
                    to: from,
                    msg: Message::RaftRequestVoteResp(resp),
                });
            }
            (Algorithm::Raft, Message::RaftRequestVoteResp(resp)) => {
                self.raft_handle_vote_response(from, resp, out)?
            }
            // Vote traffic of the other protocol: not ours to answer.
            _ => {}
        }
        Ok(())
    }

    fn start_election(&mut self, out: &mut Effects) -> Result<(), NodeFault> {
        match self.config.algorithm {
            Algorithm::Paxos => self.paxos_start_election(out),
            Algorithm::Raft => self.raft_start_election(out),
        }
    }

    pub(crate) fn advance_commit(&mut self, out: &mut Effects) -> Result<(), NodeFault> {
        match self.config.algorithm {
            Algorithm::Paxos => self.paxos_advance_commit(out),
            Algorithm::Raft => self.raft_advance_commit(out),
        }
    }

    /// Adopt a newer term seen in any message. Returns `true` on step-down.
    pub fn observe_term(&mut self, msg_term: Term, out: &mut Effects) -> bool {
        if msg_term <= self.state.current_term {
            return false;
        }
        self.state.current_term = msg_term;
        if self.config.algorithm == Algorithm::Raft {
            self.state.voted_for = None;
        }
        let was_leader = self.is_leader();
        if !matches!(self.state.role, RoleState::Follower) {
            self.state.role = RoleState::Follower;
            out.push(Effect::RoleChange {
                role: Role::Follower,
                term: msg_term,
            });
        }
        if was_leader {
            out.push(Effect::ResetTimer(TimerKind::Election));
        }
        true
    }

    fn restart(&mut self, out: &mut Effects) {
        let p = self.state.persistent();
        self.state = NodeState::from_persistent(p);
        out.push(Effect::ResetTimer(TimerKind::Election));
    }

    /// Index `N` replicated on a majority according to `match_index`.
    pub(crate) fn quorum_match(&self) -> LogIndex {
        let RoleState::Leader(ls) = &self.state.role else {
            return 0;
        };
        let mut m = ls.match_index.clone();
        m.sort_unstable_by(|a, b| b.cmp(a));
        m[self.config.cluster.majority() - 1]
    }

    pub(crate) fn become_leader(&mut self, next_index: LogIndex, out: &mut Effects) -> Result<(), NodeFault> {
        let n = self.config.cluster.n();
        let mut match_index = vec![0; n];
        match_index[self.id()] = self.state.log.len();
        self.state.role = RoleState::Leader(LeaderState {
            next_index: vec![next_index; n],
            match_index,
        });
        out.push(Effect::RoleChange {
            role: Role::Leader,
            term: self.state.current_term,
        });
        out.push(Effect::ResetTimer(TimerKind::Heartbeat));
        self.leader_tick(out);
        // Only changes anything in a single-server cluster.
        self.advance_commit(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Operation;

    fn node(alg: Algorithm, id: ServerId, n: usize) -> Node {
        Node::new(NodeConfig::new(id, ClusterConfig::new(n).unwrap(), alg))
    }

    #[test]
    fn observe_term_steps_leader_down() {
        let mut nd = node(Algorithm::Raft, 0, 3);
        nd.state.current_term = Term(2);
        nd.state.voted_for = Some(0);
        nd.state.role = RoleState::Leader(LeaderState {
            next_index: vec![1; 3],
            match_index: vec![0; 3],
        });
        let mut out = vec![];
        assert!(nd.observe_term(Term(5), &mut out));
        assert_eq!(nd.state.current_term, Term(5));
        assert_eq!(nd.role(), Role::Follower);
        assert_eq!(nd.state.voted_for, None);
        assert!(out.contains(&Effect::ResetTimer(TimerKind::Election)));
    }

    #[test]
    fn observe_term_equal_and_stale_are_noops() {
        for (role, t) in [(RoleState::Follower, 5), (RoleState::Candidate(CandidateState::Raft(RaftCandidateState { votes: BTreeSet::new() })), 3)] {
            let mut nd = node(Algorithm::Raft, 0, 3);
            nd.state.current_term = Term(5);
            nd.state.role = role.clone();
            let before = nd.clone();
            let mut out = vec![];
            assert!(!nd.observe_term(Term(t), &mut out));
            assert_eq!(nd, before);
            assert!(out.is_empty());
        }
    }

    #[test]
    fn restart_keeps_persistent_and_resets_volatile() {
        let mut nd = node(Algorithm::Raft, 1, 3);
        nd.state.current_term = Term(4);
        nd.state.voted_for = Some(2);
        nd.state.log.push(LogEntry::new(Operation(1), Term(3)));
        nd.state.commit_index = 1;
        nd.state.last_applied = 1;
        nd.state.role = RoleState::Leader(LeaderState {
            next_index: vec![2; 3],
            match_index: vec![1; 3],
        });
        let out = nd.step(Input::Restart).unwrap();
        assert_eq!(out, vec![Effect::ResetTimer(TimerKind::Election)]);
        assert_eq!(nd.state.current_term, Term(4));
        assert_eq!(nd.state.voted_for, Some(2));
        assert_eq!(nd.state.log.len(), 1);
        assert_eq!(nd.state.commit_index, 0);
        assert_eq!(nd.state.last_applied, 0);
        assert_eq!(nd.role(), Role::Follower);
    }

    #[test]
    fn timers_ignored_in_wrong_role() {
        let mut nd = node(Algorithm::Paxos, 0, 3);
        assert!(nd.step(Input::Timer(TimerKind::Heartbeat)).unwrap().is_empty());
    }
}
