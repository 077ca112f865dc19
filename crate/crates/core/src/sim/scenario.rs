use serde::{Deserialize, Serialize};

use crate::mutation::Mutations;
use crate::types::{Algorithm, Operation, ServerId};

/// Virtual time in integer ticks.
pub type Time = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayModel {
    Fixed(Time),
    /// Inclusive on both ends.
    Uniform { lo: Time, hi: Time },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Uniform { lo: 2, hi: 8 }
    }
}

/// Overrides the default delay on one directed link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDelay {
    pub from: ServerId,
    pub to: ServerId,
    pub model: DelayModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeouts {
    pub election_base: Time,
    /// Raft's randomized extra wait, drawn from `[0, spread]` at every reset.
    pub election_spread: Time,
    /// Paxos does not need randomization; zero keeps its timeout fixed.
    pub paxos_election_spread: Time,
    pub heartbeat_interval: Time,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self {
            election_base: 150,
            election_spread: 150,
            paxos_election_spread: 0,
            heartbeat_interval: 50,
        }
    }
}

impl Timeouts {
    pub fn spread_for(&self, algorithm: Algorithm) -> Time {
        match algorithm {
            Algorithm::Raft => self.election_spread,
            Algorithm::Paxos => self.paxos_election_spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    Crash(ServerId),
    Restart(ServerId),
    /// Crash whichever server currently leads (highest term wins ties).
    CrashLeader,
    /// Restart every crashed server.
    RestartAll,
    /// Servers in different groups cannot talk. Unlisted servers are isolated.
    PartitionSet(Vec<Vec<ServerId>>),
    Heal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub at: Time,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Workload {
    Explicit(Vec<(Time, Operation)>),
    /// `count` operations, one every `interval` ticks from `start`, ids `1..=count`.
    Rate { start: Time, interval: Time, count: u64 },
}

impl Default for Workload {
    fn default() -> Self {
        Workload::Explicit(Vec::new())
    }
}

impl Workload {
    pub fn expand(&self) -> Vec<(Time, Operation)> {
        match self {
            Workload::Explicit(ops) => ops.clone(),
            Workload::Rate { start, interval, count } => (0..*count)
                .map(|k| (start + k * interval, Operation(k + 1)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub duration: Time,
    pub delay: DelayModel,
    pub link_delays: Vec<LinkDelay>,
    pub timeouts: Timeouts,
    pub faults: Vec<FaultEvent>,
    pub workload: Workload,
    pub batch_cap: Option<usize>,
    /// Wait before a rejected client retries the next server.
    pub client_retry: Time,
    pub mutations: Mutations,
}

impl Scenario {
    pub fn new(algorithm: Algorithm, n: usize, seed: u64) -> Self {
        Self {
            n,
            algorithm,
            seed,
            duration: 3_000,
            delay: DelayModel::default(),
            link_delays: Vec::new(),
            timeouts: Timeouts::default(),
            faults: Vec::new(),
            workload: Workload::default(),
            batch_cap: None,
            client_retry: 20,
            mutations: Mutations::none(),
        }
    }

    pub fn delay_for(&self, from: ServerId, to: ServerId) -> DelayModel {
        self.link_delays
            .iter()
            .rev()
            .find(|l| l.from == from && l.to == to)
            .map(|l| l.model)
            .unwrap_or(self.delay)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n == 0 {
            return Err(ScenarioError::EmptyCluster);
        }
        let t = &self.timeouts;
        if t.heartbeat_interval == 0 || t.heartbeat_interval >= t.election_base {
            return Err(ScenarioError::Timeouts {
                heartbeat: t.heartbeat_interval,
                election: t.election_base,
            });
        }
        if self.client_retry == 0 {
            return Err(ScenarioError::ZeroClientRetry);
        }
        let check_delay = |m: DelayModel| match m {
            DelayModel::Uniform { lo, hi } if lo > hi => Err(ScenarioError::DelayBounds { lo, hi }),
            DelayModel::Fixed(0) | DelayModel::Uniform { lo: 0, .. } => Err(ScenarioError::ZeroDelay),
            _ => Ok(()),
        };
        check_delay(self.delay)?;
        for l in &self.link_delays {
            self.check_server(l.from)?;
            self.check_server(l.to)?;
            check_delay(l.model)?;
        }
        for f in &self.faults {
            if f.at > self.duration {
                return Err(ScenarioError::FaultAfterEnd { at: f.at, duration: self.duration });
            }
            match &f.kind {
                FaultKind::Crash(s) | FaultKind::Restart(s) => self.check_server(*s)?,
                FaultKind::PartitionSet(groups) => {
                    let mut seen = vec![false; self.n];
                    for &s in groups.iter().flatten() {
                        self.check_server(s)?;
                        if std::mem::replace(&mut seen[s], true) {
                            return Err(ScenarioError::OverlappingPartition(s));
                        }
                    }
                }
                FaultKind::CrashLeader | FaultKind::RestartAll | FaultKind::Heal => {}
            }
        }
        let ops = self.workload.expand();
        let mut ids: Vec<_> = ops.iter().map(|(_, op)| *op).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ScenarioError::DuplicateOperation(w[0]));
        }
        if let Workload::Rate { interval: 0, count, .. } = self.workload {
            if count > 1 {
                return Err(ScenarioError::ZeroInterval);
            }
        }
        Ok(())
    }

    fn check_server(&self, s: ServerId) -> Result<(), ScenarioError> {
        if s >= self.n {
            Err(ScenarioError::UnknownServer { server: s, n: self.n })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("a cluster needs at least one server")]
    EmptyCluster,
    #[error("heartbeat interval ({heartbeat}) must be positive and below the election timeout ({election})")]
    Timeouts { heartbeat: Time, election: Time },
    #[error("uniform delay needs lo <= hi (got {lo}..{hi})")]
    DelayBounds { lo: Time, hi: Time },
    #[error("message delays must be at least one tick")]
    ZeroDelay,
    #[error("client retry delay must be at least one tick")]
    ZeroClientRetry,
    #[error("fault at {at} is after the end of the run ({duration})")]
    FaultAfterEnd { at: Time, duration: Time },
    #[error("server {server} does not exist in a cluster of {n}")]
    UnknownServer { server: ServerId, n: usize },
    #[error("server {0} appears in more than one partition group")]
    OverlappingPartition(ServerId),
    #[error("operation {0} is submitted more than once")]
    DuplicateOperation(Operation),
    #[error("rate workload interval must be positive")]
    ZeroInterval,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid() {
        Scenario::new(Algorithm::Raft, 3, 1).validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let mut s = Scenario::new(Algorithm::Raft, 3, 1);
        s.timeouts.heartbeat_interval = s.timeouts.election_base;
        assert!(matches!(s.validate(), Err(ScenarioError::Timeouts { .. })));

        let mut s = Scenario::new(Algorithm::Paxos, 3, 1);
        s.faults.push(FaultEvent { at: s.duration + 1, kind: FaultKind::Heal });
        assert!(matches!(s.validate(), Err(ScenarioError::FaultAfterEnd { .. })));

        let mut s = Scenario::new(Algorithm::Paxos, 3, 1);
        s.faults.push(FaultEvent { at: 1, kind: FaultKind::Crash(3) });
        assert!(matches!(s.validate(), Err(ScenarioError::UnknownServer { .. })));

        let mut s = Scenario::new(Algorithm::Paxos, 3, 1);
        s.delay = DelayModel::Uniform { lo: 4, hi: 2 };
        assert!(matches!(s.validate(), Err(ScenarioError::DelayBounds { .. })));

        let mut s = Scenario::new(Algorithm::Paxos, 3, 1);
        s.workload = Workload::Explicit(vec![(1, Operation(1)), (2, Operation(1))]);
        assert!(matches!(s.validate(), Err(ScenarioError::DuplicateOperation(_))));

        assert!(matches!(
            Scenario::new(Algorithm::Raft, 0, 1).validate(),
            Err(ScenarioError::EmptyCluster)
        ));
    }

    #[test]
    fn rate_workload_ids_are_unique() {
        let w = Workload::Rate { start: 100, interval: 10, count: 3 };
        assert_eq!(
            w.expand(),
            vec![(100, Operation(1)), (110, Operation(2)), (120, Operation(3))]
        );
    }
}
