//! Deterministic discrete-event simulator.
//!
//! Channels are reliable and FIFO per directed link. Partitions drop traffic
//! crossing group boundaries and crashed servers drop whatever reaches them.
//! Given the same [`Scenario`], [`run`] produces the same trace, byte for byte.

pub mod metrics;
pub mod rng;
pub mod scenario;
pub mod trace;

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::message::{Effect, Input, Message, TimerKind};
use crate::node::{Node, NodeConfig, NodeFault, NodeState, Persistent};
use crate::types::{ClusterConfig, Operation, Role, ServerId};

pub use metrics::{measure_election, mean_and_variance, RunMetrics};
pub use scenario::{
    DelayModel, FaultEvent, FaultKind, LinkDelay, Scenario, ScenarioError, Time, Timeouts, Workload,
};
pub use trace::{DropReason, Event, Trace, TraceEvent};

use rng::{sample_delay, sample_timeout, stream, Stream};

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub metrics: RunMetrics,
    pub final_states: Vec<NodeState>,
    pub up: Vec<bool>,
    pub end_time: Time,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(#[from] ScenarioError),
    #[error("internal fault at t={time}: {fault}")]
    Fault {
        time: Time,
        fault: NodeFault,
        output: Box<RunOutput>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Pending {
    Deliver { from: ServerId, to: ServerId, msg: Message },
    Timer { server: ServerId, kind: TimerKind, generation: u64 },
    Fault(FaultKind),
    Client { op: Operation, target: ServerId },
}

struct Server {
    node: Node,
    up: bool,
    durable: Persistent,
    election_gen: u64,
    heartbeat_gen: u64,
    timeout_rng: ChaCha8Rng,
}

struct Sim<'a> {
    sc: &'a Scenario,
    now: Time,
    next_seq: u64,
    queue: BTreeMap<(Time, u64), Pending>,
    servers: Vec<Server>,
    link_rng: Vec<ChaCha8Rng>,
    /// Latest scheduled delivery per directed link; later sends never overtake it.
    link_tail: Vec<Time>,
    /// Partition group per server, `None` when fully connected.
    groups: Option<Vec<usize>>,
    trace: Trace,
}

/// Execute a scenario to its duration.
pub fn run(sc: &Scenario) -> Result<RunOutput, SimError> {
    sc.validate()?;
    let mut sim = Sim::new(sc);
    let outcome = sim.run_loop();
    let output = sim.finish();
    match outcome {
        Ok(()) => Ok(output),
        Err(fault) => Err(SimError::Fault {
            time: output.end_time,
            fault,
            output: Box::new(output),
        }),
    }
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let cluster = ClusterConfig::new(sc.n).expect("validated");
        let servers = (0..sc.n)
            .map(|id| {
                let mut cfg = NodeConfig::new(id, cluster, sc.algorithm);
                cfg.batch_cap = sc.batch_cap;
                cfg.mutations = sc.mutations.clone();
                Server {
                    node: Node::new(cfg),
                    up: true,
                    durable: Persistent::default(),
                    election_gen: 0,
                    heartbeat_gen: 0,
                    timeout_rng: stream(sc.seed, Stream::ElectionTimeout(id)),
                }
            })
            .collect();
        let link_rng = (0..sc.n * sc.n)
            .map(|k| {
                stream(
                    sc.seed,
                    Stream::LinkDelay {
                        from: k / sc.n,
                        to: k % sc.n,
                    },
                )
            })
            .collect();
        let mut sim = Self {
            sc,
            now: 0,
            next_seq: 0,
            queue: BTreeMap::new(),
            servers,
            link_rng,
            link_tail: vec![0; sc.n * sc.n],
            groups: None,
            trace: Trace::new(),
        };
        for s in 0..sc.n {
            sim.arm_election(s);
        }
        for f in &sc.faults {
            sim.schedule(f.at, Pending::Fault(f.kind.clone()));
        }
        for (at, op) in sc.workload.expand() {
            let target = (op.0 as usize) % sc.n;
            sim.schedule(at, Pending::Client { op, target });
        }
        sim
    }

    fn schedule(&mut self, at: Time, ev: Pending) {
        self.queue.insert((at, self.next_seq), ev);
        self.next_seq += 1;
    }

    fn record(&mut self, ev: Event) {
        self.trace.push(self.now, ev);
    }

    fn run_loop(&mut self) -> Result<(), NodeFault> {
        while let Some(entry) = self.queue.first_entry() {
            let (at, _) = *entry.key();
            if at > self.sc.duration {
                break;
            }
            let ev = entry.remove();
            self.now = at;
            self.dispatch(ev)?;
        }
        self.now = self.now.max(self.sc.duration);
        Ok(())
    }

    fn finish(self) -> RunOutput {
        let metrics = measure_election(&self.trace, self.sc.n);
        RunOutput {
            metrics,
            final_states: self.servers.iter().map(|s| s.node.state.clone()).collect(),
            up: self.servers.iter().map(|s| s.up).collect(),
            end_time: self.now,
            trace: self.trace,
        }
    }

    fn dispatch(&mut self, ev: Pending) -> Result<(), NodeFault> {
        match ev {
            Pending::Deliver { from, to, msg } => {
                if !self.servers[to].up {
                    self.record(Event::DropMsg { from, to, msg, reason: DropReason::Down });
                } else if self.partitioned(from, to) {
                    self.record(Event::DropMsg { from, to, msg, reason: DropReason::Partition });
                } else {
                    self.record(Event::DeliverMsg { from, to, msg: msg.clone() });
                    self.step(to, Input::Deliver { from, msg })?;
                }
            }
            Pending::Timer { server, kind, generation } => {
                let s = &self.servers[server];
                let current = match kind {
                    TimerKind::Election => s.election_gen,
                    TimerKind::Heartbeat => s.heartbeat_gen,
                };
                if s.up && generation == current {
                    self.record(Event::TimerFire { server, timer: kind });
                    self.step(server, Input::Timer(kind))?;
                }
            }
            Pending::Client { op, target } => {
                if self.servers[target].up {
                    self.record(Event::ClientSubmit { server: target, op });
                    self.step(target, Input::ClientRequest(op))?;
                } else {
                    self.reject_client(target, op);
                }
            }
            Pending::Fault(kind) => self.fault(kind)?,
        }
        Ok(())
    }

    fn reject_client(&mut self, server: ServerId, op: Operation) {
        self.record(Event::NotLeaderReject { server, op });
        let next = (server + 1) % self.sc.n;
        self.schedule(self.now + self.sc.client_retry, Pending::Client { op, target: next });
    }

    fn fault(&mut self, kind: FaultKind) -> Result<(), NodeFault> {
        match kind {
            FaultKind::Crash(s) => self.crash(s),
            FaultKind::Restart(s) => self.restart(s)?,
            FaultKind::CrashLeader => {
                let leader = self
                    .servers
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.up && s.node.is_leader())
                    .max_by_key(|(_, s)| s.node.state.current_term)
                    .map(|(id, _)| id);
                if let Some(s) = leader {
                    self.crash(s);
                }
            }
            FaultKind::RestartAll => {
                for s in 0..self.sc.n {
                    self.restart(s)?;
                }
            }
            FaultKind::PartitionSet(groups) => {
                let mut of = vec![usize::MAX; self.sc.n];
                for (g, members) in groups.iter().enumerate() {
                    for &s in members {
                        of[s] = g;
                    }
                }
                let unlisted = of.iter_mut().filter(|g| **g == usize::MAX);
                for (isolated, g) in (groups.len()..).zip(unlisted) {
                    *g = isolated;
                }
                self.groups = Some(of);
                self.record(Event::PartitionSet { groups });
            }
            FaultKind::Heal => {
                self.groups = None;
                self.record(Event::Heal);
            }
        }
        Ok(())
    }

    fn crash(&mut self, s: ServerId) {
        let srv = &mut self.servers[s];
        if !srv.up {
            return;
        }
        srv.up = false;
        srv.election_gen += 1;
        srv.heartbeat_gen += 1;
        self.record(Event::Crash { server: s });
    }

    fn restart(&mut self, s: ServerId) -> Result<(), NodeFault> {
        let srv = &mut self.servers[s];
        if srv.up {
            return Ok(());
        }
        srv.up = true;
        srv.node.state = NodeState::from_persistent(srv.durable.clone());
        let st = &srv.node.state;
        let ev = Event::Restart {
            server: s,
            term: st.current_term,
            voted_for: st.voted_for,
            log: st.log.clone(),
            commit_index: st.commit_index,
        };
        self.record(ev);
        self.step(s, Input::Restart)
    }

    fn partitioned(&self, a: ServerId, b: ServerId) -> bool {
        self.groups.as_ref().is_some_and(|g| g[a] != g[b])
    }

    fn arm_election(&mut self, s: ServerId) {
        let spread = self.sc.timeouts.spread_for(self.sc.algorithm);
        let srv = &mut self.servers[s];
        srv.election_gen += 1;
        let wait = sample_timeout(&mut srv.timeout_rng, self.sc.timeouts.election_base, spread);
        let generation = srv.election_gen;
        self.schedule(
            self.now + wait,
            Pending::Timer { server: s, kind: TimerKind::Election, generation },
        );
    }

    fn arm_heartbeat(&mut self, s: ServerId) {
        let srv = &mut self.servers[s];
        srv.heartbeat_gen += 1;
        let generation = srv.heartbeat_gen;
        self.schedule(
            self.now + self.sc.timeouts.heartbeat_interval,
            Pending::Timer { server: s, kind: TimerKind::Heartbeat, generation },
        );
    }

    fn send(&mut self, from: ServerId, to: ServerId, msg: Message) {
        self.record(Event::SendMsg { from, to, msg: msg.clone() });
        if self.partitioned(from, to) {
            self.record(Event::DropMsg { from, to, msg, reason: DropReason::Partition });
            return;
        }
        let link = from * self.sc.n + to;
        let delay = sample_delay(&mut self.link_rng[link], self.sc.delay_for(from, to));
        let at = (self.now + delay).max(self.link_tail[link]);
        self.link_tail[link] = at;
        self.schedule(at, Pending::Deliver { from, to, msg });
    }

    fn step(&mut self, s: ServerId, input: Input) -> Result<(), NodeFault> {
        let effects = match self.servers[s].node.step(input) {
            Ok(effects) => effects,
            Err(fault) => {
                self.record(Event::InternalFault { fault: fault.clone() });
                return Err(fault);
            }
        };
        for effect in effects {
            match effect {
                Effect::Persist => {
                    let p = self.servers[s].node.state.persistent();
                    self.servers[s].durable = p.clone();
                    self.record(Event::PersistWrite {
                        server: s,
                        term: p.current_term,
                        voted_for: p.voted_for,
                        log: p.log,
                    });
                }
                Effect::Send { to, msg } => self.send(s, to, msg),
                Effect::Broadcast(msg) => {
                    for to in (0..self.sc.n).filter(|&p| p != s) {
                        self.send(s, to, msg.clone());
                    }
                }
                Effect::Apply { index, entry } => {
                    let node = &self.servers[s].node;
                    let ev = Event::ApplyOp {
                        server: s,
                        index,
                        op: entry.op,
                        entry_term: entry.term,
                        term: node.state.current_term,
                        by_leader: node.is_leader(),
                    };
                    self.record(ev);
                }
                Effect::RoleChange { role, term } => {
                    let st = &self.servers[s].node.state;
                    let ev = Event::RoleChange {
                        server: s,
                        role,
                        term,
                        commit_index: st.commit_index,
                        log: (role == Role::Leader).then(|| st.log.clone()),
                    };
                    self.record(ev);
                    let srv = &mut self.servers[s];
                    if role == Role::Leader {
                        srv.election_gen += 1;
                    } else {
                        srv.heartbeat_gen += 1;
                    }
                }
                Effect::ResetTimer(TimerKind::Election) => self.arm_election(s),
                Effect::ResetTimer(TimerKind::Heartbeat) => self.arm_heartbeat(s),
                Effect::NotLeader(op) => self.reject_client(s, op),
            }
        }
        Ok(())
    }
}
