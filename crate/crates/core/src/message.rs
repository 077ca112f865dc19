//! RPC messages plus the pure input/effect interface of a node.

use serde::{Deserialize, Serialize};

use crate::types::{LogEntry, LogIndex, Operation, Role, ServerId, Term};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AppendEntriesReq {
    pub term: Term,
    pub leader_id: ServerId,
    pub prev_log_index: LogIndex,
    pub prev_log_term: Term,
    pub entries: Vec<LogEntry>,
    pub leader_commit: LogIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AppendEntriesResp {
    pub term: Term,
    pub success: bool,
    /// `prev_log_index + entries.len()` of the request being acknowledged.
    pub last_appended: LogIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PaxosVoteReq {
    pub term: Term,
    pub leader_commit: LogIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PaxosVoteResp {
    pub term: Term,
    pub vote_granted: bool,
    /// Voter's entries after the candidate's commit index.
    pub entries: Vec<(LogIndex, LogEntry)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RaftVoteReq {
    pub term: Term,
    pub candidate_id: ServerId,
    pub last_log_index: LogIndex,
    pub last_log_term: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RaftVoteResp {
    pub term: Term,
    pub vote_granted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    AppendEntries(AppendEntriesReq),
    AppendEntriesResp(AppendEntriesResp),
    PaxosRequestVote(PaxosVoteReq),
    PaxosRequestVoteResp(PaxosVoteResp),
    RaftRequestVote(RaftVoteReq),
    RaftRequestVoteResp(RaftVoteResp),
}

impl Message {
    /// Sender's term at send time.
    pub fn term(&self) -> Term {
        match self {
            Message::AppendEntries(m) => m.term,
            Message::AppendEntriesResp(m) => m.term,
            Message::PaxosRequestVote(m) => m.term,
            Message::PaxosRequestVoteResp(m) => m.term,
            Message::RaftRequestVote(m) => m.term,
            Message::RaftRequestVoteResp(m) => m.term,
        }
    }

    pub fn is_vote_request(&self) -> bool {
        matches!(
            self,
            Message::PaxosRequestVote(_) | Message::RaftRequestVote(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::AppendEntries(_) => "AppendEntries",
            Message::AppendEntriesResp(_) => "AppendEntriesResp",
            Message::PaxosRequestVote(_) => "PaxosRequestVote",
            Message::PaxosRequestVoteResp(_) => "PaxosRequestVoteResp",
            Message::RaftRequestVote(_) => "RaftRequestVote",
            Message::RaftRequestVoteResp(_) => "RaftRequestVoteResp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimerKind {
    Election,
    Heartbeat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    Deliver { from: ServerId, msg: Message },
    Timer(TimerKind),
    ClientRequest(Operation),
    /// Crash recovery: keep persistent state, reset everything volatile.
    Restart,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Send { to: ServerId, msg: Message },
    Broadcast(Message),
    /// Persistent state changed; it must be durable before any later send.
    Persist,
    Apply { index: LogIndex, entry: LogEntry },
    RoleChange { role: Role, term: Term },
    ResetTimer(TimerKind),
    NotLeader(Operation),
}

impl Effect {
    pub fn is_send(&self) -> bool {
        matches!(self, Effect::Send { .. } | Effect::Broadcast(_))
    }
}
