//! Algorithm-neutral domain types shared by both protocols.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Server identifier in `0..n`.
pub type ServerId = usize;

/// 1-based position in a replicated log. `0` means "before the first entry".
pub type LogIndex = u64;

/// Election epoch. Every server starts at term zero.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Term(pub u64);

impl Term {
    pub const ZERO: Term = Term(0);

    pub fn next(self) -> Term {
        Term(self.0 + 1)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An opaque client command. Workloads hand out globally unique ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Operation(pub u64);

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogEntry {
    pub op: Operation,
    pub term: Term,
}

impl LogEntry {
    pub fn new(op: Operation, term: Term) -> Self {
        Self { op, term }
    }
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.op, self.term)
    }
}

/// Contiguous, 1-indexed sequence of log entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Log {
    entries: Vec<LogEntry>,
}

impl Log {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<LogEntry>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> LogIndex {
        self.entries.len() as LogIndex
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: LogIndex) -> Option<&LogEntry> {
        if index == 0 {
            return None;
        }
        self.entries.get((index - 1) as usize)
    }

    /// Term stored at `index`; the sentinel index `0` has term zero.
    pub fn term_at(&self, index: LogIndex) -> Option<Term> {
        if index == 0 {
            Some(Term::ZERO)
        } else {
            self.get(index).map(|e| e.term)
        }
    }

    /// `(len, term of last entry)`, or `(0, 0)` for the empty log.
    pub fn last_info(&self) -> (LogIndex, Term) {
        match self.entries.last() {
            Some(e) => (self.len(), e.term),
            None => (0, Term::ZERO),
        }
    }

    pub fn push(&mut self, entry: LogEntry) {
        self.entries.push(entry);
    }

    /// Keep entries `1..=len`, dropping the rest.
    pub fn truncate(&mut self, len: LogIndex) {
        self.entries.truncate(len as usize);
    }

    /// Overwrite the entry at an existing index.
    pub fn set(&mut self, index: LogIndex, entry: LogEntry) {
        self.entries[(index - 1) as usize] = entry;
    }

    /// Entries at indices `from..=len` (empty if `from > len`).
    pub fn suffix(&self, from: LogIndex) -> &[LogEntry] {
        let start = from.max(1) as usize - 1;
        self.entries.get(start..).unwrap_or(&[])
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// `(index, entry)` pairs in index order.
    pub fn iter(&self) -> impl Iterator<Item = (LogIndex, &LogEntry)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i as LogIndex + 1, e))
    }

    pub fn position_of(&self, op: Operation) -> Option<LogIndex> {
        self.iter().find(|(_, e)| e.op == op).map(|(i, _)| i)
    }
}

impl fmt::Display for Log {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Paxos,
    Raft,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Paxos, Algorithm::Raft];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Paxos => "paxos",
            Algorithm::Raft => "raft",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paxos" => Ok(Algorithm::Paxos),
            "raft" => Ok(Algorithm::Raft),
            other => Err(format!("unknown algorithm `{other}` (expected paxos or raft)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Follower,
    Candidate,
    Leader,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Follower => "follower",
            Role::Candidate => "candidate",
            Role::Leader => "leader",
        })
    }
}

/// Cluster membership: servers `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterConfig {
    n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("a cluster needs at least one server")]
pub struct EmptyCluster;

impl ClusterConfig {
    pub fn new(n: usize) -> Result<Self, EmptyCluster> {
        if n == 0 {
            Err(EmptyCluster)
        } else {
            Ok(Self { n })
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ids(&self) -> impl Iterator<Item = ServerId> {
        0..self.n
    }

    pub fn majority(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn peers(&self, me: ServerId) -> impl Iterator<Item = ServerId> {
        (0..self.n).filter(move |&p| p != me)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(op: u64, term: u64) -> LogEntry {
        LogEntry::new(Operation(op), Term(term))
    }

    #[test]
    fn last_info_examples() {
        assert_eq!(Log::new().last_info(), (0, Term(0)));
        assert_eq!(Log::from_entries(vec![e(1, 1), e(2, 3)]).last_info(), (2, Term(3)));
        assert_eq!(Log::from_entries(vec![e(1, 7)]).last_info(), (1, Term(7)));
    }

    #[test]
    fn term_at_sentinel_and_missing() {
        let log = Log::from_entries(vec![e(1, 2)]);
        assert_eq!(log.term_at(0), Some(Term(0)));
        assert_eq!(log.term_at(1), Some(Term(2)));
        assert_eq!(log.term_at(2), None);
    }

    #[test]
    fn suffix_bounds() {
        let log = Log::from_entries(vec![e(1, 1), e(2, 1), e(3, 1)]);
        assert_eq!(log.suffix(2), &[e(2, 1), e(3, 1)]);
        assert!(log.suffix(4).is_empty());
        assert!(log.suffix(9).is_empty());
        assert_eq!(log.suffix(0).len(), 3);
    }

    #[test]
    fn majority_threshold() {
        for (n, m) in [(1, 1), (2, 2), (3, 2), (4, 3), (5, 3)] {
            assert_eq!(ClusterConfig::new(n).unwrap().majority(), m);
        }
        assert!(ClusterConfig::new(0).is_err());
    }
}
