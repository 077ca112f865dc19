//! Totally ordered record of everything a run did.
//!
//! Serialized as newline-delimited JSON, one event per line, with the fields
//! always in the order `time`, `seq`, `kind`, `payload`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::scenario::Time;
use crate::message::{Message, TimerKind};
use crate::node::NodeFault;
use crate::types::{Log, LogIndex, Operation, Role, ServerId, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    Partition,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    SendMsg {
        from: ServerId,
        to: ServerId,
        msg: Message,
    },
    DeliverMsg {
        from: ServerId,
        to: ServerId,
        msg: Message,
    },
    DropMsg {
        from: ServerId,
        to: ServerId,
        msg: Message,
        reason: DropReason,
    },
    TimerFire {
        server: ServerId,
        timer: TimerKind,
    },
    /// Promotions carry the leader's log as it stands right after election.
    RoleChange {
        server: ServerId,
        role: Role,
        term: Term,
        commit_index: LogIndex,
        log: Option<Log>,
    },
    PersistWrite {
        server: ServerId,
        term: Term,
        voted_for: Option<ServerId>,
        log: Log,
    },
    ApplyOp {
        server: ServerId,
        index: LogIndex,
        op: Operation,
        entry_term: Term,
        /// The applying server's current term.
        term: Term,
        by_leader: bool,
    },
    Crash {
        server: ServerId,
    },
    /// State the server resumed with.
    Restart {
        server: ServerId,
        term: Term,
        voted_for: Option<ServerId>,
        log: Log,
        commit_index: LogIndex,
    },
    ClientSubmit {
        server: ServerId,
        op: Operation,
    },
    NotLeaderReject {
        server: ServerId,
        op: Operation,
    },
    PartitionSet {
        groups: Vec<Vec<ServerId>>,
    },
    Heal,
    InternalFault {
        fault: NodeFault,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: Time,
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Time, event: Event) {
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent { time, seq, event });
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceEvent> + '_ {
        self.events.iter()
    }

    pub fn to_ndjson(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            let line = serde_json::to_string(e).expect("trace events always serialize");
            let _ = writeln!(s, "{line}");
        }
        s
    }

    pub fn from_ndjson(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { events })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::AppendEntriesResp;

    #[test]
    fn field_order_is_time_seq_kind_payload() {
        let mut t = Trace::new();
        t.push(
            3,
            Event::SendMsg {
                from: 0,
                to: 1,
                msg: Message::AppendEntriesResp(AppendEntriesResp {
                    term: Term(2),
                    success: true,
                    last_appended: 1,
                }),
            },
        );
        t.push(4, Event::Heal);
        let text = t.to_ndjson();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[0].starts_with(r#"{"time":3,"seq":0,"kind":"SendMsg","payload":{"from":0"#), "{}", lines[0]);
        assert_eq!(lines[1], r#"{"time":4,"seq":1,"kind":"Heal"}"#);
        assert_eq!(Trace::from_ndjson(&text).unwrap(), t);
    }
}
