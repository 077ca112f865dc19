use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use paxraft::check::{check_all, explore, ExploreConfig, Strategy, Verdict, Violation};
use paxraft::sim::{self, mean_and_variance, Event, RunMetrics, RunOutput, SimError, Time, Trace};
use paxraft::{Algorithm, Mutation, Mutations, Role};
use rayon::prelude::*;
use serde::Serialize;

use crate::file::{AlgorithmChoice, ScenarioFile};

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Usage = 1,
    Violations = 2,
    Inconclusive = 3,
}

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub algorithm: Option<Algorithm>,
    pub duration: Option<Time>,
    pub mutations: Vec<Mutation>,
}

#[derive(Serialize)]
struct ViolationRecord<'a> {
    kind: String,
    witnesses: &'a [usize],
    description: &'a str,
}

fn violations_json(vs: &[Violation]) -> String {
    let recs: Vec<ViolationRecord> = vs
        .iter()
        .map(|v| ViolationRecord {
            kind: v.kind.to_string(),
            witnesses: &v.witnesses,
            description: &v.description,
        })
        .collect();
    serde_json::to_string_pretty(&recs).expect("plain records serialize") + "\n"
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let p = dir.join(name);
    fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
}

/// Apply overrides: flags shadow file values.
pub fn resolve(file: &ScenarioFile, o: &RunOverrides) -> anyhow::Result<sim::Scenario> {
    let alg = match (o.algorithm, file.algorithm) {
        (Some(a), _) => a,
        (None, AlgorithmChoice::Paxos) => Algorithm::Paxos,
        (None, AlgorithmChoice::Raft) => Algorithm::Raft,
        (None, AlgorithmChoice::Both) => bail!("algorithm = \"both\" needs --algorithm for a single run (or use bench)"),
    };
    let mut file = file.clone();
    file.mutations.extend(o.mutations.iter().copied());
    if let Some(s) = o.seed {
        file.seed = s;
    }
    if let Some(d) = o.duration {
        file.duration = d;
    }
    file.scenario(alg)
}

fn leader_history(trace: &Trace) -> Vec<(Time, usize, u64)> {
    trace
        .iter()
        .filter_map(|e| match e.event {
            Event::RoleChange { server, role: Role::Leader, term, .. } => Some((e.time, server, term.0)),
            _ => None,
        })
        .collect()
}

pub fn summary(sc: &sim::Scenario, out: &RunOutput, violations: &[Violation]) -> String {
    let m = &out.metrics;
    let mut s = String::new();
    let _ = writeln!(s, "{} n={} seed={} duration={}", sc.algorithm, sc.n, sc.seed, sc.duration);
    let leaders: Vec<String> = leader_history(&out.trace)
        .iter()
        .map(|(t, srv, term)| format!("t{term}:s{srv}@{t}"))
        .collect();
    let _ = writeln!(s, "leaders     {}", if leaders.is_empty() { "none".into() } else { leaders.join(" ") });
    let _ = writeln!(
        s,
        "elections   started {} won {} split {}",
        m.elections_started, m.elections_won, m.split_vote_elections
    );
    let (mean, var) = mean_and_variance(&m.election_latencies);
    let _ = writeln!(s, "latency     mean {mean:.1} variance {var:.1} samples {}", m.election_latencies.len());
    let _ = writeln!(s, "commits     {} ops", m.committed_ops);
    let _ = writeln!(
        s,
        "traffic     {} messages, {} entries in votes, {} in appends, {} duplicate",
        m.messages_total, m.vote_entries_shipped, m.append_entries_shipped, m.duplicate_entry_transmissions
    );
    if violations.is_empty() {
        let _ = writeln!(s, "violations  none");
    } else {
        let _ = writeln!(s, "violations  {}", violations.len());
        for v in violations {
            let _ = writeln!(s, "  {v}");
        }
    }
    s
}

/// Simulate and check; internal faults still yield the partial trace.
pub fn simulate(sc: &sim::Scenario) -> anyhow::Result<(RunOutput, Vec<Violation>)> {
    let out = match sim::run(sc) {
        Ok(out) => out,
        Err(SimError::Fault { output, .. }) => *output,
        Err(e @ SimError::Config(_)) => return Err(e.into()),
    };
    let v = check_all(&out.trace, sc.algorithm);
    Ok((out, v))
}

pub fn cmd_run(path: &Path, o: &RunOverrides, out_dir: &Path) -> anyhow::Result<Status> {
    let sc = resolve(&ScenarioFile::load(path)?, o)?;
    let (out, violations) = simulate(&sc)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write(out_dir, "trace.ndjson", &out.trace.to_ndjson())?;
    write(out_dir, "metrics.tsv", &out.metrics.to_kv())?;
    write(out_dir, "violations.json", &violations_json(&violations))?;
    print!("{}", summary(&sc, &out, &violations));
    println!("wrote       {}", out_dir.display());
    Ok(if violations.is_empty() { Status::Ok } else { Status::Violations })
}

#[derive(Debug, Clone)]
pub struct ExploreArgs {
    pub algorithm: Option<Algorithm>,
    pub n: usize,
    pub ops: u64,
    pub max_term: u64,
    pub depth: usize,
    pub crashes: u8,
    pub drops: u8,
    pub max_states: usize,
    pub exact: bool,
    pub symmetry: bool,
    pub strategy: Strategy,
    pub walks: u64,
    pub walk_seed: u64,
    pub mutation: Option<Mutation>,
    pub out: Option<PathBuf>,
}

pub fn explore_config(a: &ExploreArgs) -> anyhow::Result<ExploreConfig> {
    let alg = match (a.algorithm, a.mutation) {
        (Some(alg), Some(m)) if m.algorithm() != alg => {
            bail!("mutation {m} applies to {}, not {alg}", m.algorithm())
        }
        (Some(alg), _) => alg,
        (None, Some(m)) => m.algorithm(),
        (None, None) => Algorithm::Raft,
    };
    let mut c = ExploreConfig::new(alg);
    c.n = a.n;
    c.ops = a.ops;
    c.max_term = a.max_term;
    c.depth = a.depth;
    c.crash_budget = a.crashes;
    c.drop_budget = a.drops;
    c.max_states = a.max_states;
    c.exact = a.exact;
    c.symmetry = a.symmetry;
    c.strategy = a.strategy;
    c.walks = a.walks;
    c.walk_seed = a.walk_seed;
    c.mutations = a.mutation.map(Mutations::only).unwrap_or_default();
    c.validate().map_err(anyhow::Error::msg)?;
    Ok(c)
}

pub fn cmd_explore(a: &ExploreArgs) -> anyhow::Result<Status> {
    let cfg = explore_config(a)?;
    let r = explore(&cfg);
    println!(
        "{} n={} ops={} max_term={} depth={} crashes={} drops={}{}",
        cfg.algorithm,
        cfg.n,
        cfg.ops,
        cfg.max_term,
        cfg.depth,
        cfg.crash_budget,
        cfg.drop_budget,
        a.mutation.map(|m| format!(" mutation={m}")).unwrap_or_default()
    );
    println!(
        "visited {} states, {} transitions, {} levels, peak frontier {}",
        r.visited, r.transitions, r.levels, r.peak_frontier
    );
    let status = match &r.verdict {
        Verdict::Ok => {
            println!("result      ok");
            Status::Ok
        }
        Verdict::Inconclusive { depth_capped, state_capped } => {
            println!(
                "result      inconclusive ({depth_capped} branches hit the depth bound{})",
                if *state_capped { ", state cap reached" } else { "" }
            );
            Status::Inconclusive
        }
        Verdict::Counterexample(cx) => {
            println!("result      counterexample in {} steps", cx.actions.len());
            for v in &cx.violations {
                println!("  {v}");
            }
            if let Some(dir) = &a.out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                write(dir, "trace.ndjson", &cx.trace.to_ndjson())?;
                write(dir, "violations.json", &violations_json(&cx.violations))?;
                write(dir, "actions.json", &(serde_json::to_string_pretty(&cx.actions)? + "\n"))?;
                println!("wrote       {}", dir.display());
            }
            Status::Violations
        }
    };
    Ok(status)
}

/// Aggregates for one algorithm across all repetitions.
#[derive(Debug, Clone, Default)]
pub struct BenchColumn {
    pub latencies: Vec<Time>,
    pub split_votes: u64,
    pub election_terms: u64,
    pub vote_entries_shipped: u64,
    pub duplicate_entry_transmissions: u64,
    pub messages_total: u64,
    pub committed_ops: u64,
    pub violations: usize,
}

impl BenchColumn {
    fn add(&mut self, m: &RunMetrics, violations: usize) {
        self.latencies.extend_from_slice(&m.election_latencies);
        self.split_votes += m.split_vote_elections;
        self.election_terms += m.election_terms;
        self.vote_entries_shipped += m.vote_entries_shipped;
        self.duplicate_entry_transmissions += m.duplicate_entry_transmissions;
        self.messages_total += m.messages_total;
        self.committed_ops += m.committed_ops;
        self.violations += violations;
    }

    pub fn split_vote_rate(&self) -> f64 {
        if self.election_terms == 0 {
            0.0
        } else {
            self.split_votes as f64 / self.election_terms as f64
        }
    }
}

/// One simulation of a benchmark.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    /// Sorted by seed, then algorithm.
    pub runs: Vec<BenchRun>,
    pub columns: BTreeMap<Algorithm, BenchColumn>,
}

/// Run both algorithms of a `both` document over seeds `seed..seed+reps`;
/// run `r` of each algorithm shares seed `seed + r`.
pub fn bench(file: &ScenarioFile, reps: u64) -> anyhow::Result<BenchReport> {
    if file.algorithm != AlgorithmChoice::Both {
        bail!("bench needs a comparison document with algorithm = \"both\"");
    }
    if reps == 0 {
        bail!("--reps must be at least 1");
    }
    let jobs: Vec<(Algorithm, u64)> = Algorithm::ALL
        .into_iter()
        .flat_map(|a| (0..reps).map(move |r| (a, file.seed + r)))
        .collect();
    let mut runs = jobs
        .into_par_iter()
        .map(|(algorithm, seed)| {
            let mut f = file.clone();
            f.seed = seed;
            f.mutations.retain(|m| m.algorithm() == algorithm);
            let (out, v) = simulate(&f.scenario(algorithm)?)?;
            Ok(BenchRun { algorithm, seed, metrics: out.metrics, violations: v.len() })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    runs.sort_by_key(|r| (r.seed, r.algorithm));
    let mut columns: BTreeMap<Algorithm, BenchColumn> = BTreeMap::new();
    for r in &runs {
        columns.entry(r.algorithm).or_default().add(&r.metrics, r.violations);
    }
    Ok(BenchReport { runs, columns })
}

fn comparison_table(cols: &BTreeMap<Algorithm, BenchColumn>) -> String {
    let mut s = String::from("metric");
    for a in cols.keys() {
        let _ = write!(s, ",{a}");
    }
    s.push('\n');
    let mut row = |name: &str, f: &dyn Fn(&BenchColumn) -> String| {
        s.push_str(name);
        for c in cols.values() {
            s.push(',');
            s.push_str(&f(c));
        }
        s.push('\n');
    };
    row("election_latency_samples", &|c| c.latencies.len().to_string());
    row("election_latency_mean", &|c| format!("{:.3}", mean_and_variance(&c.latencies).0));
    row("election_latency_variance", &|c| format!("{:.3}", mean_and_variance(&c.latencies).1));
    row("split_vote_rate", &|c| format!("{:.6}", c.split_vote_rate()));
    row("split_vote_elections", &|c| c.split_votes.to_string());
    row("vote_entries_shipped", &|c| c.vote_entries_shipped.to_string());
    row("duplicate_entry_transmissions", &|c| c.duplicate_entry_transmissions.to_string());
    row("messages_total", &|c| c.messages_total.to_string());
    row("committed_ops", &|c| c.committed_ops.to_string());
    row("violations", &|c| c.violations.to_string());
    s
}

fn runs_csv(runs: &[BenchRun]) -> String {
    let mut s = String::from(
        "algorithm,seed,elections_started,elections_won,split_vote_elections,election_terms,\
         latency_samples,latency_mean,vote_entries_shipped,append_entries_shipped,\
         duplicate_entry_transmissions,committed_ops,messages_total,violations\n",
    );
    for r in runs {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{:.3},{},{},{},{},{},{}",
            r.algorithm,
            r.seed,
            m.elections_started,
            m.elections_won,
            m.split_vote_elections,
            m.election_terms,
            m.election_latencies.len(),
            mean_and_variance(&m.election_latencies).0,
            m.vote_entries_shipped,
            m.append_entries_shipped,
            m.duplicate_entry_transmissions,
            m.committed_ops,
            m.messages_total,
            r.violations
        );
    }
    s
}

pub fn cmd_bench(path: &Path, reps: u64, out_dir: &Path) -> anyhow::Result<Status> {
    let file = ScenarioFile::load(path)?;
    let report = bench(&file, reps)?;
    let table = comparison_table(&report.columns);
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write(out_dir, "comparison.csv", &table)?;
    write(out_dir, "runs.csv", &runs_csv(&report.runs))?;
    println!("{reps} paired seeds from {}", file.seed);
    for line in table.lines() {
        let cells: Vec<&str> = line.split(',').collect();
        println!("{:<32}{:>14}{:>14}", cells[0], cells.get(1).unwrap_or(&""), cells.get(2).unwrap_or(&""));
    }
    println!("wrote {}", out_dir.display());
    let violations: usize = report.columns.values().map(|c| c.violations).sum();
    Ok(if violations == 0 { Status::Ok } else { Status::Violations })
}
