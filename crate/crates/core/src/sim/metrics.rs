//! Election and traffic measurements derived from a finished trace.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::scenario::Time;
use super::trace::{Event, Trace};
use crate::message::Message;
use crate::types::{Role, ServerId, Term};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub elections_started: u64,
    pub elections_won: u64,
    /// Terms in which two or more servers stood as candidate and nobody won.
    pub split_vote_elections: u64,
    /// Terms in which at least one server stood as candidate.
    pub election_terms: u64,
    /// From each leader failure (or time zero) to the next promotion.
    pub election_latencies: Vec<Time>,
    pub vote_entries_shipped: u64,
    pub append_entries_shipped: u64,
    /// AppendEntries deliveries of a `(server, index, operation)` already received once.
    pub duplicate_entry_transmissions: u64,
    pub committed_ops: u64,
    pub messages_total: u64,
}

impl RunMetrics {
    /// Split elections over all contested terms; zero when nobody campaigned.
    pub fn split_vote_rate(&self) -> f64 {
        if self.election_terms == 0 {
            0.0
        } else {
            self.split_vote_elections as f64 / self.election_terms as f64
        }
    }

    /// Flat `name<TAB>value` rows in a fixed order.
    pub fn to_kv(&self) -> String {
        let lat: Vec<String> = self.election_latencies.iter().map(|l| l.to_string()).collect();
        let (mean, var) = mean_and_variance(&self.election_latencies);
        let mut s = String::new();
        let rows: [(&str, String); 14] = [
            ("elections_started", self.elections_started.to_string()),
            ("elections_won", self.elections_won.to_string()),
            ("split_vote_elections", self.split_vote_elections.to_string()),
            ("election_terms", self.election_terms.to_string()),
            ("split_vote_rate", format!("{:.6}", self.split_vote_rate())),
            ("election_latencies", lat.join(",")),
            ("election_latency_mean", format!("{mean:.6}")),
            ("election_latency_variance", format!("{var:.6}")),
            ("vote_entries_shipped", self.vote_entries_shipped.to_string()),
            ("append_entries_shipped", self.append_entries_shipped.to_string()),
            (
                "duplicate_entry_transmissions",
                self.duplicate_entry_transmissions.to_string(),
            ),
            ("committed_ops", self.committed_ops.to_string()),
            ("messages_total", self.messages_total.to_string()),
            ("election_latency_samples", self.election_latencies.len().to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k}\t{v}");
        }
        s
    }
}

/// Mean and unbiased sample variance; `(0, 0)` for fewer than two samples'
/// worth of spread.
pub fn mean_and_variance(xs: &[Time]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Compute every metric from the trace alone.
pub fn measure_election(trace: &Trace, n: usize) -> RunMetrics {
    let mut m = RunMetrics::default();
    let mut candidates: BTreeMap<Term, BTreeSet<ServerId>> = BTreeMap::new();
    let mut won: BTreeSet<Term> = BTreeSet::new();
    let mut received: HashSet<(ServerId, u64, u64)> = HashSet::new();
    let mut committed: HashSet<u64> = HashSet::new();

    // Latency tracking: who currently believes it leads, and since when
    // we have been waiting for a replacement.
    let mut leading: BTreeSet<ServerId> = BTreeSet::new();
    let mut waiting_since: Option<Time> = Some(0);

    for ev in trace.iter() {
        match &ev.event {
            Event::RoleChange { server, role, term, .. } => match role {
                Role::Candidate => {
                    m.elections_started += 1;
                    candidates.entry(*term).or_default().insert(*server);
                    leading.remove(server);
                }
                Role::Leader => {
                    m.elections_won += 1;
                    won.insert(*term);
                    leading.insert(*server);
                    if let Some(t0) = waiting_since.take() {
                        m.election_latencies.push(ev.time - t0);
                    }
                }
                Role::Follower => {
                    leading.remove(server);
                }
            },
            Event::Crash { server } => {
                if leading.remove(server) && leading.is_empty() && waiting_since.is_none() {
                    waiting_since = Some(ev.time);
                }
            }
            Event::PartitionSet { groups } => {
                let majority = n / 2 + 1;
                let cut_off = leading
                    .iter()
                    .all(|s| groups.iter().find(|g| g.contains(s)).is_none_or(|g| g.len() < majority));
                if !leading.is_empty() && cut_off && waiting_since.is_none() {
                    waiting_since = Some(ev.time);
                }
            }
            Event::SendMsg { msg, .. } => {
                m.messages_total += 1;
                match msg {
                    Message::PaxosRequestVoteResp(r) => m.vote_entries_shipped += r.entries.len() as u64,
                    Message::AppendEntries(r) => m.append_entries_shipped += r.entries.len() as u64,
                    _ => {}
                }
            }
            Event::DeliverMsg { to, msg: Message::AppendEntries(r), .. } => {
                for (k, e) in r.entries.iter().enumerate() {
                    let index = r.prev_log_index + 1 + k as u64;
                    if !received.insert((*to, index, e.op.0)) {
                        m.duplicate_entry_transmissions += 1;
                    }
                }
            }
            Event::ApplyOp { op, .. } => {
                committed.insert(op.0);
            }
            _ => {}
        }
    }

    m.election_terms = candidates.len() as u64;
    m.split_vote_elections = candidates
        .iter()
        .filter(|(t, who)| who.len() >= 2 && !won.contains(t))
        .count() as u64;
    m.committed_ops = committed.len() as u64;
    m
}
