//! Raft-style MultiPaxos and Raft as deterministic replicated-log state
//! machines behind one interface.
//!
//! * [`node`], [`replication`], [`paxos`], [`raft`]: pure per-server handlers.
//! * [`sim`]: seeded discrete-event simulator producing traces and metrics.
//! * [`check`]: trace oracles for the safety properties and a bounded
//!   exhaustive explorer with mutation hooks.

pub mod check;
pub mod message;
pub mod mutation;
pub mod node;
pub mod paxos;
pub mod raft;
pub mod replication;
pub mod sim;
pub mod types;

pub use message::{Effect, Input, Message, TimerKind};
pub use mutation::{Mutation, Mutations};
pub use node::{Node, NodeConfig, NodeFault, NodeState, Persistent};
pub use types::{Algorithm, ClusterConfig, Log, LogEntry, LogIndex, Operation, Role, ServerId, Term};
