//! Breadth-first enumeration of every interleaving of a tiny cluster.
//!
//! The nondeterministic choices are: which link delivers its oldest message,
//! which server's election timer fires, when a leader heartbeats, when a
//! client submits to a leader, and (within a budget) crashes, restarts and
//! message drops. Reached states are deduplicated; safety is checked on every
//! transition. Counterexamples are replayed into an ordinary [`Trace`].

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::oracles::{check_all, log_matching_conflict, misplaced_operation, Violation, ViolationKind};
use crate::message::{Effect, Input, Message, TimerKind};
use crate::mutation::Mutations;
use crate::node::{CandidateState, Node, NodeConfig, NodeState, RoleState};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh3::xxh3_128;
use crate::paxos::next_candidate_term;
use crate::sim::{DropReason, Event, Trace};
use crate::types::{Algorithm, ClusterConfig, Log, LogIndex, Operation, Role, ServerId, Term};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub algorithm: Algorithm,
    pub n: usize,
    pub ops: u64,
    pub max_term: u64,
    /// Maximum number of transitions along any branch.
    pub depth: usize,
    pub crash_budget: u8,
    /// Messages that may be lost outright; zero keeps channels reliable.
    pub drop_budget: u8,
    /// Stop with an inconclusive verdict after this many distinct states.
    pub max_states: usize,
    /// Deduplicate on the full state encoding instead of a 128-bit digest.
    pub exact: bool,
    /// Identify Raft states that differ only by a renaming of servers.
    pub symmetry: bool,
    pub strategy: Strategy,
    /// Seeded random walks of up to `depth` steps tried before the
    /// exhaustive search. They can only find counterexamples, never prove `Ok`.
    pub walks: u64,
    pub walk_seed: u64,
    pub mutations: Mutations,
}

impl ExploreConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            n: 3,
            ops: 2,
            max_term: 4,
            depth: 200,
            crash_budget: 1,
            drop_budget: 0,
            max_states: 20_000_000,
            exact: false,
            symmetry: true,
            strategy: Strategy::BreadthFirst,
            walks: 0,
            walk_seed: 0,
            mutations: Mutations::none(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 || self.n > 5 {
            return Err(format!("n must be between 1 and 5 (got {})", self.n));
        }
        if self.max_term == 0 {
            return Err("max term must be at least 1".into());
        }
        if self.depth == 0 {
            return Err("depth must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Finds shortest counterexamples; memory grows with the widest level.
    BreadthFirst,
    /// Memory grows with the number of states only. Complete when the depth
    /// bound is never reached.
    DepthFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Deliver { from: ServerId, to: ServerId },
    Drop { from: ServerId, to: ServerId },
    Timeout(ServerId),
    Heartbeat(ServerId),
    Client(ServerId),
    /// Crash and restart: volatile state and every message in flight to the
    /// server are lost.
    Reboot(ServerId),
}

impl Action {
    fn category(self) -> usize {
        match self {
            Action::Deliver { .. } => 0,
            Action::Drop { .. } => 1,
            Action::Timeout(_) => 2,
            Action::Heartbeat(_) => 3,
            Action::Client(_) => 4,
            Action::Reboot(_) => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub actions: Vec<Action>,
    pub trace: Trace,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Counterexample(Box<Counterexample>),
    Inconclusive { depth_capped: usize, state_capped: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreReport {
    pub verdict: Verdict,
    pub visited: usize,
    pub transitions: u64,
    pub levels: usize,
    pub peak_frontier: usize,
}

impl ExploreReport {
    pub fn is_ok(&self) -> bool {
        matches!(self.verdict, Verdict::Ok)
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match &self.verdict {
            Verdict::Counterexample(c) => Some(c),
            _ => None,
        }
    }
}

/// Facts about the past that the safety checks need but the nodes forget.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct Ghost {
    applied: BTreeMap<LogIndex, Operation>,
    commits: BTreeSet<(Term, LogIndex, Operation)>,
    leaders: BTreeMap<Term, (ServerId, Log)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct World {
    nodes: Vec<NodeState>,
    /// Directed links, `from * n + to`.
    links: Vec<VecDeque<Message>>,
    next_op: u64,
    crashes: u8,
    drops: u8,
    ghost: Ghost,
}

/// Appends every byte fed to it; turns a derived `Hash` into an encoding.
#[derive(Default)]
struct ByteSink(Vec<u8>);

impl Hasher for ByteSink {
    fn finish(&self) -> u64 {
        0
    }

    fn write(&mut self, bytes: &[u8]) {
        self.0.extend_from_slice(bytes);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Exact(Vec<u8>),
    Digest(u128),
}

fn encode(w: &World) -> Vec<u8> {
    let mut sink = ByteSink::default();
    w.hash(&mut sink);
    sink.0
}

/// Visit every order obtained by permuting runs of equal signatures in `order`.
fn for_each_tie_order(order: &mut Vec<ServerId>, sig: &[Vec<u8>], start: usize, f: &mut dyn FnMut(&[ServerId])) {
    if start >= order.len() {
        f(order);
        return;
    }
    let mut end = start + 1;
    while end < order.len() && sig[order[end]] == sig[order[start]] {
        end += 1;
    }
    permute_run(order, start, end, sig, f);
}

fn permute_run(order: &mut Vec<ServerId>, k: usize, end: usize, sig: &[Vec<u8>], f: &mut dyn FnMut(&[ServerId])) {
    if k + 1 >= end {
        for_each_tie_order(order, sig, end, f);
        return;
    }
    for i in k..end {
        order.swap(k, i);
        permute_run(order, k + 1, end, sig, f);
        order.swap(k, i);
    }
}

/// Rename every server `s` to `pi[s]`. Only meaningful for Raft, whose
/// behaviour does not depend on server ids.
fn permute(w: &World, pi: &[ServerId]) -> World {
    let n = pi.len();
    let map_msg = |m: &Message| {
        let mut m = m.clone();
        match &mut m {
            Message::AppendEntries(r) => r.leader_id = pi[r.leader_id],
            Message::RaftRequestVote(r) => r.candidate_id = pi[r.candidate_id],
            _ => {}
        }
        m
    };
    let mut nodes = vec![NodeState::default(); n];
    for (s, st) in w.nodes.iter().enumerate() {
        let mut st = st.clone();
        st.voted_for = st.voted_for.map(|v| pi[v]);
        match &mut st.role {
            RoleState::Leader(ls) => {
                let mut next = vec![0; n];
                let mut matched = vec![0; n];
                for p in 0..n {
                    next[pi[p]] = ls.next_index[p];
                    matched[pi[p]] = ls.match_index[p];
                }
                ls.next_index = next;
                ls.match_index = matched;
            }
            RoleState::Candidate(CandidateState::Raft(cs)) => {
                cs.votes = cs.votes.iter().map(|&v| pi[v]).collect();
            }
            RoleState::Candidate(CandidateState::Paxos(_)) | RoleState::Follower => {}
        }
        nodes[pi[s]] = st;
    }
    let mut links = vec![VecDeque::new(); n * n];
    for from in 0..n {
        for to in 0..n {
            links[pi[from] * n + pi[to]] = w.links[from * n + to].iter().map(map_msg).collect();
        }
    }
    let mut ghost = w.ghost.clone();
    for (leader, _) in ghost.leaders.values_mut() {
        *leader = pi[*leader];
    }
    World {
        nodes,
        links,
        ghost,
        next_op: w.next_op,
        crashes: w.crashes,
        drops: w.drops,
    }
}

struct Finding {
    kind: ViolationKind,
    description: String,
}

struct Explorer<'a> {
    cfg: &'a ExploreConfig,
    configs: Vec<NodeConfig>,
}

pub fn explore(cfg: &ExploreConfig) -> ExploreReport {
    cfg.validate().expect("invalid explore config");
    let ex = Explorer::new(cfg);
    ex.run()
}

impl<'a> Explorer<'a> {
    fn new(cfg: &'a ExploreConfig) -> Self {
        let cluster = ClusterConfig::new(cfg.n).expect("validated");
        let configs = (0..cfg.n)
            .map(|id| {
                let mut c = NodeConfig::new(id, cluster, cfg.algorithm);
                c.mutations = cfg.mutations.clone();
                c
            })
            .collect();
        Self { cfg, configs }
    }

    fn initial(&self) -> World {
        let n = self.cfg.n;
        World {
            nodes: vec![NodeState::default(); n],
            links: vec![VecDeque::new(); n * n],
            next_op: 1,
            crashes: 0,
            drops: 0,
            ghost: Ghost::default(),
        }
    }

    fn key(&self, w: &World) -> Key {
        let bytes = if self.cfg.symmetry && self.cfg.algorithm == Algorithm::Raft {
            self.canonical_bytes(w)
        } else {
            encode(w)
        };
        if self.cfg.exact {
            Key::Exact(bytes)
        } else {
            Key::Digest(xxh3_128(&bytes))
        }
    }

    /// Smallest encoding over the renamings that sort servers by an
    /// id-free signature. Servers with equal signatures are tried in every order.
    fn canonical_bytes(&self, w: &World) -> Vec<u8> {
        let n = self.cfg.n;
        let sig: Vec<Vec<u8>> = (0..n)
            .map(|s| {
                let st = &w.nodes[s];
                let mut sink = ByteSink::default();
                (st.current_term, st.role(), &st.log, st.commit_index, st.voted_for.is_some()).hash(&mut sink);
                for p in 0..n {
                    (w.links[p * n + s].len(), w.links[s * n + p].len()).hash(&mut sink);
                }
                sink.0
            })
            .collect();
        let mut order: Vec<ServerId> = (0..n).collect();
        order.sort_by(|&a, &b| sig[a].cmp(&sig[b]));
        let mut best: Option<Vec<u8>> = None;
        for_each_tie_order(&mut order, &sig, 0, &mut |order| {
            let mut pi = vec![0; n];
            for (k, &old) in order.iter().enumerate() {
                pi[old] = k;
            }
            let bytes = if pi.iter().enumerate().all(|(i, &p)| i == p) {
                encode(w)
            } else {
                encode(&permute(w, &pi))
            };
            if best.as_ref().is_none_or(|b| bytes < *b) {
                best = Some(bytes);
            }
        });
        best.expect("at least one order")
    }

    fn run(&self) -> ExploreReport {
        if let Some(report) = self.random_walks() {
            return report;
        }
        match self.cfg.strategy {
            Strategy::BreadthFirst => self.run_bfs(),
            Strategy::DepthFirst => self.run_dfs(),
        }
    }

    fn run_dfs(&self) -> ExploreReport {
        struct Frame {
            world: World,
            actions: Vec<Action>,
            next: usize,
            via: Option<Action>,
        }
        let init = self.initial();
        let mut seen: HashSet<Key> = HashSet::new();
        seen.insert(self.key(&init));
        let mut actions = Vec::new();
        self.enabled(&init, &mut actions);
        let mut stack = vec![Frame { world: init, actions: actions.clone(), next: 0, via: None }];
        let (mut transitions, mut peak, mut depth_capped, mut state_capped) = (0u64, 1, 0, false);

        while let Some(top) = stack.last_mut() {
            let Some(&action) = top.actions.get(top.next) else {
                stack.pop();
                continue;
            };
            top.next += 1;
            transitions += 1;
            let mut w = top.world.clone();
            if let Some(f) = self.apply(&mut w, action, None) {
                let mut path: Vec<Action> = stack.iter().filter_map(|f| f.via).collect();
                path.push(action);
                return ExploreReport {
                    verdict: Verdict::Counterexample(Box::new(self.counterexample(path, f))),
                    visited: seen.len(),
                    transitions,
                    levels: peak,
                    peak_frontier: peak,
                };
            }
            if !seen.insert(self.key(&w)) {
                continue;
            }
            if seen.len() >= self.cfg.max_states {
                state_capped = true;
                break;
            }
            self.enabled(&w, &mut actions);
            if stack.len() >= self.cfg.depth {
                depth_capped += usize::from(!actions.is_empty());
                continue;
            }
            stack.push(Frame { world: w, actions: actions.clone(), next: 0, via: Some(action) });
            peak = peak.max(stack.len());
        }
        ExploreReport {
            verdict: Self::verdict(depth_capped, state_capped),
            visited: seen.len(),
            transitions,
            levels: peak,
            peak_frontier: peak,
        }
    }

    fn random_walks(&self) -> Option<ExploreReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.walk_seed);
        let mut actions = Vec::new();
        let mut transitions = 0;
        for _ in 0..self.cfg.walks {
            // Each walk favours some kinds of step over others.
            let bias: [f64; 6] = std::array::from_fn(|_| *[0.05, 0.3, 1.0].choose(&mut rng).expect("non-empty"));
            let mut w = self.initial();
            let mut path = Vec::new();
            while path.len() < self.cfg.depth {
                self.enabled(&w, &mut actions);
                let Ok(&action) = actions.choose_weighted(&mut rng, |a| bias[a.category()]) else { break };
                transitions += 1;
                path.push(action);
                if let Some(f) = self.apply(&mut w, action, None) {
                    let len = path.len();
                    return Some(ExploreReport {
                        verdict: Verdict::Counterexample(Box::new(self.counterexample(path, f))),
                        visited: 0,
                        transitions,
                        levels: len,
                        peak_frontier: 0,
                    });
                }
            }
        }
        None
    }

    fn verdict(depth_capped: usize, state_capped: bool) -> Verdict {
        if depth_capped > 0 || state_capped {
            Verdict::Inconclusive { depth_capped, state_capped }
        } else {
            Verdict::Ok
        }
    }

    fn run_bfs(&self) -> ExploreReport {
        let init = self.initial();
        let mut seen: HashSet<Key> = HashSet::new();
        seen.insert(self.key(&init));
        // Parent pointer and incoming action per discovered state.
        let mut tree: Vec<(u32, Option<Action>)> = vec![(u32::MAX, None)];
        let mut frontier: Vec<(u32, World)> = vec![(0, init)];
        let mut transitions = 0u64;
        let mut peak = 1;
        let mut level = 0;
        let mut depth_capped = 0;
        let mut state_capped = false;
        let mut actions = Vec::new();

        while !frontier.is_empty() {
            if level == self.cfg.depth {
                depth_capped = frontier
                    .iter()
                    .filter(|(_, w)| {
                        self.enabled(w, &mut actions);
                        !actions.is_empty()
                    })
                    .count();
                break;
            }
            let mut next = Vec::new();
            for (id, world) in &frontier {
                self.enabled(world, &mut actions);
                for &action in &actions {
                    transitions += 1;
                    let mut w = world.clone();
                    let finding = self.apply(&mut w, action, None);
                    if let Some(f) = finding {
                        let mut path = self.path(&tree, *id);
                        path.push(action);
                        return ExploreReport {
                            verdict: Verdict::Counterexample(Box::new(self.counterexample(path, f))),
                            visited: seen.len(),
                            transitions,
                            levels: level + 1,
                            peak_frontier: peak,
                        };
                    }
                    if seen.insert(self.key(&w)) {
                        tree.push((*id, Some(action)));
                        next.push(((tree.len() - 1) as u32, w));
                        if seen.len() >= self.cfg.max_states {
                            state_capped = true;
                            break;
                        }
                    }
                }
                if state_capped {
                    break;
                }
            }
            if state_capped {
                break;
            }
            peak = peak.max(next.len());
            frontier = next;
            level += 1;
        }

        ExploreReport {
            verdict: Self::verdict(depth_capped, state_capped),
            visited: seen.len(),
            transitions,
            levels: level,
            peak_frontier: peak,
        }
    }

    fn path(&self, tree: &[(u32, Option<Action>)], mut id: u32) -> Vec<Action> {
        let mut path = Vec::new();
        while let Some(a) = tree[id as usize].1 {
            path.push(a);
            id = tree[id as usize].0;
        }
        path.reverse();
        path
    }

    /// Re-run `path` from the initial state while recording a trace.
    fn counterexample(&self, actions: Vec<Action>, last: Finding) -> Counterexample {
        let mut w = self.initial();
        let mut trace = Trace::new();
        for (t, &a) in actions.iter().enumerate() {
            self.apply(&mut w, a, Some((&mut trace, t as u64)));
        }
        let mut violations = check_all(&trace, self.cfg.algorithm);
        if violations.is_empty() {
            violations.push(Violation {
                kind: last.kind,
                witnesses: vec![trace.len().saturating_sub(1)],
                description: last.description,
            });
        }
        Counterexample { actions, trace, violations }
    }

    fn candidate_term(&self, w: &World, s: ServerId) -> u64 {
        let cur = w.nodes[s].current_term;
        match self.cfg.algorithm {
            Algorithm::Raft => cur.0 + 1,
            Algorithm::Paxos => next_candidate_term(cur, self.cfg.n, s).0,
        }
    }

    fn enabled(&self, w: &World, out: &mut Vec<Action>) {
        out.clear();
        let n = self.cfg.n;
        for to in 0..n {
            for from in 0..n {
                if !w.links[from * n + to].is_empty() {
                    out.push(Action::Deliver { from, to });
                    if w.drops < self.cfg.drop_budget {
                        out.push(Action::Drop { from, to });
                    }
                }
            }
        }
        for s in 0..n {
            let leader = matches!(w.nodes[s].role(), Role::Leader);
            if !leader && self.candidate_term(w, s) <= self.cfg.max_term {
                out.push(Action::Timeout(s));
            }
            if leader {
                let quiet = (0..n).all(|p| w.links[s * n + p].is_empty() && w.links[p * n + s].is_empty());
                if quiet && n > 1 {
                    out.push(Action::Heartbeat(s));
                }
                if w.next_op <= self.cfg.ops {
                    out.push(Action::Client(s));
                }
            }
            if w.crashes < self.cfg.crash_budget {
                out.push(Action::Reboot(s));
            }
        }
    }

    fn apply(&self, w: &mut World, action: Action, mut rec: Option<(&mut Trace, u64)>) -> Option<Finding> {
        let n = self.cfg.n;
        let log = |rec: &mut Option<(&mut Trace, u64)>, ev: Event| {
            if let Some((trace, t)) = rec {
                trace.push(*t, ev);
            }
        };
        let (s, input) = match action {
            Action::Deliver { from, to } => {
                let msg = w.links[from * n + to].pop_front().expect("enabled");
                log(&mut rec, Event::DeliverMsg { from, to, msg: msg.clone() });
                (to, Input::Deliver { from, msg })
            }
            Action::Drop { from, to } => {
                let msg = w.links[from * n + to].pop_front().expect("enabled");
                w.drops += 1;
                log(&mut rec, Event::DropMsg { from, to, msg, reason: DropReason::Partition });
                return None;
            }
            Action::Timeout(s) => {
                log(&mut rec, Event::TimerFire { server: s, timer: TimerKind::Election });
                (s, Input::Timer(TimerKind::Election))
            }
            Action::Heartbeat(s) => {
                log(&mut rec, Event::TimerFire { server: s, timer: TimerKind::Heartbeat });
                (s, Input::Timer(TimerKind::Heartbeat))
            }
            Action::Client(s) => {
                let op = Operation(w.next_op);
                w.next_op += 1;
                log(&mut rec, Event::ClientSubmit { server: s, op });
                (s, Input::ClientRequest(op))
            }
            Action::Reboot(s) => {
                w.crashes += 1;
                w.nodes[s] = NodeState::from_persistent(w.nodes[s].persistent());
                for p in 0..n {
                    w.links[p * n + s].clear();
                }
                log(&mut rec, Event::Crash { server: s });
                let st = &w.nodes[s];
                let ev = Event::Restart {
                    server: s,
                    term: st.current_term,
                    voted_for: st.voted_for,
                    log: st.log.clone(),
                    commit_index: st.commit_index,
                };
                log(&mut rec, ev);
                (s, Input::Restart)
            }
        };

        let before = w.nodes[s].log.clone();
        let mut node = Node::with_state(self.configs[s].clone(), std::mem::take(&mut w.nodes[s]));
        let result = node.step(input);
        w.nodes[s] = node.state;
        let effects = match result {
            Ok(effects) => effects,
            Err(fault) => {
                let description = fault.to_string();
                log(&mut rec, Event::InternalFault { fault });
                return Some(Finding { kind: ViolationKind::InternalFault, description });
            }
        };

        let mut finding = None;
        for effect in effects {
            match effect {
                Effect::Persist => {
                    let st = &w.nodes[s];
                    let ev = Event::PersistWrite {
                        server: s,
                        term: st.current_term,
                        voted_for: st.voted_for,
                        log: st.log.clone(),
                    };
                    log(&mut rec, ev);
                }
                Effect::Send { to, msg } => self.send(w, s, to, msg, &mut rec),
                Effect::Broadcast(msg) => {
                    for to in (0..n).filter(|&p| p != s) {
                        self.send(w, s, to, msg.clone(), &mut rec);
                    }
                }
                Effect::Apply { index, entry } => {
                    let st = &w.nodes[s];
                    let by_leader = matches!(st.role(), Role::Leader);
                    let term = st.current_term;
                    log(
                        &mut rec,
                        Event::ApplyOp { server: s, index, op: entry.op, entry_term: entry.term, term, by_leader },
                    );
                    let f = self.on_apply(w, s, index, entry.op, term, by_leader);
                    finding = finding.or(f);
                }
                Effect::RoleChange { role, term } => {
                    let st = &w.nodes[s];
                    let snapshot = (role == Role::Leader).then(|| st.log.clone());
                    log(
                        &mut rec,
                        Event::RoleChange {
                            server: s,
                            role,
                            term,
                            commit_index: st.commit_index,
                            log: snapshot.clone(),
                        },
                    );
                    if let Some(snapshot) = snapshot {
                        let f = self.on_promote(w, s, term, snapshot);
                        finding = finding.or(f);
                    }
                }
                Effect::NotLeader(op) => log(&mut rec, Event::NotLeaderReject { server: s, op }),
                Effect::ResetTimer(_) => {}
            }
        }
        let st = &w.nodes[s];
        for p in 0..n {
            w.links[p * n + s].retain(|m| !dead(m, st));
        }
        finding.or_else(|| self.check_logs(w, s, &before))
    }

    fn send(&self, w: &mut World, from: ServerId, to: ServerId, msg: Message, rec: &mut Option<(&mut Trace, u64)>) {
        if let Some((trace, t)) = rec {
            trace.push(*t, Event::SendMsg { from, to, msg: msg.clone() });
        }
        if !dead(&msg, &w.nodes[to]) {
            w.links[from * self.cfg.n + to].push_back(msg);
        }
    }

    fn on_apply(
        &self,
        w: &mut World,
        s: ServerId,
        index: LogIndex,
        op: Operation,
        term: Term,
        by_leader: bool,
    ) -> Option<Finding> {
        let g = &mut w.ghost;
        if let Some(&prev) = g.applied.get(&index) {
            if prev != op {
                return Some(Finding {
                    kind: ViolationKind::StateMachineSafety,
                    description: format!("s{s} applied {op} at index {index} where {prev} was applied"),
                });
            }
        } else {
            g.applied.insert(index, op);
        }
        if by_leader && g.commits.insert((term, index, op)) {
            for (&lt, (leader, snap)) in g.leaders.range(term.next()..) {
                if snap.get(index).map(|e| e.op) != Some(op) {
                    return Some(Finding {
                        kind: ViolationKind::LeaderCompleteness,
                        description: format!("{op}@{index} committed in term {term} is missing from s{leader}, leader of {lt}"),
                    });
                }
            }
        }
        None
    }

    fn on_promote(&self, w: &mut World, s: ServerId, term: Term, snapshot: Log) -> Option<Finding> {
        let g = &mut w.ghost;
        if let Some((other, _)) = g.leaders.get(&term) {
            if *other != s {
                return Some(Finding {
                    kind: ViolationKind::ElectionSafety,
                    description: format!("s{other} and s{s} both lead term {term}"),
                });
            }
        }
        for &(t, index, op) in &g.commits {
            if t < term && snapshot.get(index).map(|e| e.op) != Some(op) {
                return Some(Finding {
                    kind: ViolationKind::LeaderCompleteness,
                    description: format!("s{s} leads term {term} without {op}@{index} committed in term {t}"),
                });
            }
        }
        g.leaders.insert(term, (s, snapshot));
        None
    }

    fn check_logs(&self, w: &World, s: ServerId, before: &Log) -> Option<Finding> {
        let mine = &w.nodes[s].log;
        match self.cfg.algorithm {
            Algorithm::Raft => (0..self.cfg.n).filter(|&p| p != s).find_map(|p| {
                let theirs = &w.nodes[p].log;
                log_matching_conflict(mine, theirs)
                    .map(|i| format!("s{s} and s{p} share a term at some index but differ at index {i}"))
                    .or_else(|| {
                        misplaced_operation(mine, theirs)
                            .map(|op| format!("{op} sits at different positions on s{s} and s{p}"))
                    })
                    .map(|description| Finding { kind: ViolationKind::LogMatching, description })
            }),
            Algorithm::Paxos => w.ghost.applied.iter().find_map(|(&index, &op)| {
                let had = before.get(index).map(|e| e.op) == Some(op);
                (had && mine.get(index).map(|e| e.op) != Some(op)).then(|| Finding {
                    kind: ViolationKind::CommittedOverwrite,
                    description: format!("s{s} replaced committed {op} at index {index}"),
                })
            }),
        }
    }
}

/// A response the receiver ignores now and in every later state.
fn dead(msg: &Message, st: &NodeState) -> bool {
    let (term, live_role, granted) = match msg {
        Message::AppendEntriesResp(r) => (r.term, Role::Leader, true),
        Message::PaxosRequestVoteResp(r) => (r.term, Role::Candidate, r.vote_granted),
        Message::RaftRequestVoteResp(r) => (r.term, Role::Candidate, r.vote_granted),
        _ => return false,
    };
    term < st.current_term || (term == st.current_term && (!granted || st.role() != live_role))
}
