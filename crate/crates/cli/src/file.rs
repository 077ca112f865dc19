//! Scenario documents (TOML).
//!
//! Every key except `algorithm` is optional:
//!
//! | key | default |
//! |---|---|
//! | `n` | 3 |
//! | `seed` | 0 |
//! | `duration` | 3000 |
//! | `client_retry` | 20 |
//! | `batch_cap` | unlimited |
//! | `delay` | `{ kind = "uniform", lo = 2, hi = 8 }` |
//! | `link_delays` | none |
//! | `timeouts.election_base` | 150 |
//! | `timeouts.election_spread` | 150 |
//! | `timeouts.paxos_election_spread` | 0 |
//! | `timeouts.heartbeat_interval` | 50 |
//! | `faults` | none |
//! | `workload` | no operations |
//! | `mutations` | none |
//!
//! Unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context};
use paxraft::sim::{self, DelayModel, FaultEvent, FaultKind, Scenario, Time, Timeouts, Workload};
use paxraft::{Algorithm, Mutation, Mutations, Operation, ServerId};
use serde::{Deserialize, Deserializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmChoice {
    Paxos,
    Raft,
    Both,
}

impl AlgorithmChoice {
    pub fn algorithms(self) -> Vec<Algorithm> {
        match self {
            AlgorithmChoice::Paxos => vec![Algorithm::Paxos],
            AlgorithmChoice::Raft => vec![Algorithm::Raft],
            AlgorithmChoice::Both => Algorithm::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DelaySpec {
    Fixed { ticks: Time },
    Uniform { lo: Time, hi: Time },
}

impl From<DelaySpec> for DelayModel {
    fn from(d: DelaySpec) -> Self {
        match d {
            DelaySpec::Fixed { ticks } => DelayModel::Fixed(ticks),
            DelaySpec::Uniform { lo, hi } => DelayModel::Uniform { lo, hi },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDelaySpec {
    pub from: ServerId,
    pub to: ServerId,
    pub delay: DelaySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeoutsSpec {
    pub election_base: Time,
    pub election_spread: Time,
    pub paxos_election_spread: Time,
    pub heartbeat_interval: Time,
}

impl Default for TimeoutsSpec {
    fn default() -> Self {
        let t = Timeouts::default();
        Self {
            election_base: t.election_base,
            election_spread: t.election_spread,
            paxos_election_spread: t.paxos_election_spread,
            heartbeat_interval: t.heartbeat_interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FaultSpec {
    Crash { at: Time, server: ServerId },
    Restart { at: Time, server: ServerId },
    CrashLeader { at: Time },
    RestartAll { at: Time },
    Partition { at: Time, groups: Vec<Vec<ServerId>> },
    Heal { at: Time },
}

impl From<FaultSpec> for FaultEvent {
    fn from(f: FaultSpec) -> Self {
        let (at, kind) = match f {
            FaultSpec::Crash { at, server } => (at, FaultKind::Crash(server)),
            FaultSpec::Restart { at, server } => (at, FaultKind::Restart(server)),
            FaultSpec::CrashLeader { at } => (at, FaultKind::CrashLeader),
            FaultSpec::RestartAll { at } => (at, FaultKind::RestartAll),
            FaultSpec::Partition { at, groups } => (at, FaultKind::PartitionSet(groups)),
            FaultSpec::Heal { at } => (at, FaultKind::Heal),
        };
        FaultEvent { at, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpSpec {
    pub at: Time,
    pub op: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WorkloadSpec {
    Explicit { ops: Vec<OpSpec> },
    Rate { start: Time, interval: Time, count: u64 },
}

impl From<WorkloadSpec> for Workload {
    fn from(w: WorkloadSpec) -> Self {
        match w {
            WorkloadSpec::Explicit { ops } => {
                Workload::Explicit(ops.into_iter().map(|o| (o.at, Operation(o.op))).collect())
            }
            WorkloadSpec::Rate { start, interval, count } => Workload::Rate { start, interval, count },
        }
    }
}

fn mutation_list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mutation>, D::Error> {
    let names = Vec::<String>::deserialize(d)?;
    names.iter().map(|s| s.parse().map_err(serde::de::Error::custom)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub algorithm: AlgorithmChoice,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration: Time,
    #[serde(default = "default_client_retry")]
    pub client_retry: Time,
    #[serde(default)]
    pub batch_cap: Option<usize>,
    #[serde(default = "default_delay")]
    pub delay: DelaySpec,
    #[serde(default)]
    pub link_delays: Vec<LinkDelaySpec>,
    #[serde(default)]
    pub timeouts: TimeoutsSpec,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub workload: Option<WorkloadSpec>,
    #[serde(default, deserialize_with = "mutation_list")]
    pub mutations: Vec<Mutation>,
}

fn default_n() -> usize {
    3
}

fn default_duration() -> Time {
    3_000
}

fn default_client_retry() -> Time {
    20
}

fn default_delay() -> DelaySpec {
    DelaySpec::Uniform { lo: 2, hi: 8 }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// A validated simulator scenario for one algorithm.
    pub fn scenario(&self, algorithm: Algorithm) -> anyhow::Result<Scenario> {
        let mut sc = Scenario::new(algorithm, self.n, self.seed);
        sc.duration = self.duration;
        sc.client_retry = self.client_retry;
        sc.batch_cap = self.batch_cap;
        sc.delay = self.delay.into();
        sc.link_delays = self
            .link_delays
            .iter()
            .map(|l| sim::LinkDelay { from: l.from, to: l.to, model: l.delay.into() })
            .collect();
        let t = self.timeouts;
        sc.timeouts = Timeouts {
            election_base: t.election_base,
            election_spread: t.election_spread,
            paxos_election_spread: t.paxos_election_spread,
            heartbeat_interval: t.heartbeat_interval,
        };
        sc.faults = self.faults.iter().cloned().map(FaultEvent::from).collect();
        sc.faults.sort_by_key(|f| f.at);
        sc.workload = self.workload.clone().map(Workload::from).unwrap_or_default();
        let mut muts = Mutations::none();
        for &m in &self.mutations {
            if m.algorithm() != algorithm {
                bail!("mutation {m} applies to {}, not {algorithm}", m.algorithm());
            }
            muts.enable(m);
        }
        sc.mutations = muts;
        sc.validate()?;
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let f = ScenarioFile::parse("algorithm = \"raft\"").unwrap();
        let sc = f.scenario(Algorithm::Raft).unwrap();
        assert_eq!(sc, Scenario::new(Algorithm::Raft, 3, 0));
    }

    #[test]
    fn full_document_round_trips_into_a_scenario() {
        let f = ScenarioFile::parse(
            r#"
            algorithm = "both"
            n = 5
            seed = 9
            duration = 2000
            batch_cap = 4
            delay = { kind = "fixed", ticks = 5 }
            link_delays = [{ from = 0, to = 1, delay = { kind = "uniform", lo = 1, hi = 3 } }]
            mutations = ["raft-no-voted-for"]

            [timeouts]
            election_spread = 0

            [[faults]]
            kind = "partition"
            at = 500
            groups = [[0, 1], [2, 3, 4]]

            [[faults]]
            kind = "crash-leader"
            at = 400

            [workload]
            kind = "explicit"
            ops = [{ at = 300, op = 1 }, { at = 310, op = 2 }]
            "#,
        )
        .unwrap();
        let sc = f.scenario(Algorithm::Raft).unwrap();
        assert_eq!(sc.n, 5);
        assert_eq!(sc.delay, DelayModel::Fixed(5));
        assert_eq!(sc.timeouts.election_spread, 0);
        assert_eq!(sc.timeouts.election_base, 150);
        assert_eq!(sc.faults[0].kind, FaultKind::CrashLeader);
        assert_eq!(sc.workload.expand().len(), 2);
        assert!(sc.mutations.is_enabled(Mutation::RaftNoVotedFor));
        assert!(f.scenario(Algorithm::Paxos).is_err());
    }

    #[test]
    fn unknown_keys_are_named() {
        for doc in [
            "algorithm = \"raft\"\nspeed = 3",
            "algorithm = \"raft\"\n[timeouts]\nelection = 3",
            "algorithm = \"raft\"\n[[faults]]\nkind = \"heal\"\nat = 1\nserver = 2",
        ] {
            let err = format!("{:#}", ScenarioFile::parse(doc).unwrap_err());
            assert!(err.contains("unknown field"), "{err}");
        }
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let f = ScenarioFile::parse("algorithm = \"paxos\"\n[timeouts]\nheartbeat_interval = 500").unwrap();
        assert!(f.scenario(Algorithm::Paxos).is_err());
        assert!(ScenarioFile::parse("algorithm = \"zab\"").is_err());
        assert!(ScenarioFile::parse("n = 3").is_err());
    }
}
