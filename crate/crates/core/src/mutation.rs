//! Deliberate protocol bugs used to show that each safety guard matters.
//!
//! Every mutation removes exactly one of the rules that distinguish the two
//! protocols' leader elections. Nothing is enabled by default.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mutation {
    /// Raft leader commits without requiring `log[N].term == currentTerm`.
    RaftNoCommitTermGuard,
    /// Paxos candidate keeps merged entries at their original term.
    PaxosNoTermRewrite,
    /// Paxos candidate takes the first entry seen per index instead of the greatest-term one.
    PaxosPickFirstNotGreatest,
    /// Raft voter skips the up-to-date log comparison.
    RaftNoUpToDateCheck,
    /// Raft voter ignores `votedFor`.
    RaftNoVotedFor,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::RaftNoCommitTermGuard,
        Mutation::PaxosNoTermRewrite,
        Mutation::PaxosPickFirstNotGreatest,
        Mutation::RaftNoUpToDateCheck,
        Mutation::RaftNoVotedFor,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Mutation::RaftNoCommitTermGuard => "raft-no-commit-term-guard",
            Mutation::PaxosNoTermRewrite => "paxos-no-term-rewrite",
            Mutation::PaxosPickFirstNotGreatest => "paxos-pick-first-not-greatest",
            Mutation::RaftNoUpToDateCheck => "raft-no-up-to-date-check",
            Mutation::RaftNoVotedFor => "raft-no-voted-for",
        }
    }

    /// The protocol whose code path this mutation touches.
    pub fn algorithm(self) -> Algorithm {
        match self {
            Mutation::PaxosNoTermRewrite | Mutation::PaxosPickFirstNotGreatest => Algorithm::Paxos,
            _ => Algorithm::Raft,
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace('_', "-");
        Mutation::ALL
            .into_iter()
            .find(|m| m.slug() == wanted || format!("{m:?}").to_ascii_lowercase() == wanted)
            .ok_or_else(|| {
                let known: Vec<_> = Mutation::ALL.iter().map(|m| m.slug()).collect();
                format!("unknown mutation `{s}` (known: {})", known.join(", "))
            })
    }
}

/// The set of enabled mutations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mutations {
    enabled: BTreeSet<Mutation>,
}

impl Mutations {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn only(m: Mutation) -> Self {
        let mut s = Self::default();
        s.enable(m);
        s
    }

    pub fn enable(&mut self, m: Mutation) {
        self.enabled.insert(m);
    }

    pub fn is_enabled(&self, m: Mutation) -> bool {
        self.enabled.contains(&m)
    }

    pub fn is_empty(&self) -> bool {
        self.enabled.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Mutation> + '_ {
        self.enabled.iter().copied()
    }
}
