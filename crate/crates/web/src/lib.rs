//! Browser entry points. Each export takes plain numbers or strings and
//! returns a JSON document for the page to render.

use paxraft::check::{check_all, explore, ExploreConfig, Strategy, Verdict};
use paxraft::sim::{self, mean_and_variance, Event, FaultEvent, FaultKind, Scenario, SimError, Workload};
use paxraft::{Algorithm, Mutation, Mutations, Role};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Mark {
    pub time: u64,
    pub server: usize,
    pub kind: &'static str,
    pub label: String,
}

#[derive(Debug, Serialize)]
pub struct Timeline {
    pub algorithm: Algorithm,
    pub n: usize,
    pub duration: u64,
    pub marks: Vec<Mark>,
    pub metrics: Vec<(String, String)>,
    pub violations: Vec<String>,
}

/// A loaded cluster whose leader crashes at `crash_at` (0 = never) and
/// restarts `down_for` ticks later.
pub fn timeline(algorithm: &str, n: usize, seed: u64, ops: u64, crash_at: u64, down_for: u64) -> Result<Timeline, String> {
    let algorithm: Algorithm = algorithm.parse()?;
    let mut sc = Scenario::new(algorithm, n, seed);
    sc.duration = 2_000;
    sc.workload = Workload::Rate { start: 250, interval: 40, count: ops };
    if crash_at > 0 {
        sc.faults.push(FaultEvent { at: crash_at.min(sc.duration), kind: FaultKind::CrashLeader });
        sc.faults.push(FaultEvent { at: (crash_at + down_for).min(sc.duration), kind: FaultKind::RestartAll });
    }
    let out = match sim::run(&sc) {
        Ok(out) => out,
        Err(SimError::Fault { output, .. }) => *output,
        Err(e) => return Err(e.to_string()),
    };
    let marks = out
        .trace
        .iter()
        .filter_map(|e| {
            let (server, kind, label) = match &e.event {
                Event::RoleChange { server, role: Role::Leader, term, .. } => (*server, "leader", format!("leads term {}", term.0)),
                Event::RoleChange { server, role: Role::Candidate, term, .. } => (*server, "candidate", format!("stands in term {}", term.0)),
                Event::ApplyOp { server, index, op, .. } => (*server, "apply", format!("applies {op} at {index}")),
                Event::Crash { server } => (*server, "crash", "crashes".into()),
                Event::Restart { server, term, .. } => (*server, "restart", format!("restarts in term {}", term.0)),
                _ => return None,
            };
            Some(Mark { time: e.time, server, kind, label })
        })
        .collect();
    let metrics = out
        .metrics
        .to_kv()
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let violations = check_all(&out.trace, algorithm).iter().map(|v| v.to_string()).collect();
    Ok(Timeline { algorithm, n, duration: sc.duration, marks, metrics, violations })
}

#[derive(Debug, Serialize)]
pub struct SplitRow {
    pub algorithm: Algorithm,
    pub spread: u64,
    pub split_votes: u64,
    pub contested_terms: u64,
    pub rate: f64,
    pub latency_mean: f64,
    pub latency_variance: f64,
}

/// Three servers whose first election timers all start at zero, over
/// `reps` seeds, for each algorithm at the given Raft spread.
pub fn split_votes(reps: u64, spread: u64) -> Vec<SplitRow> {
    Algorithm::ALL
        .into_iter()
        .map(|algorithm| {
            let (mut splits, mut terms, mut lat) = (0, 0, Vec::new());
            for seed in 0..reps {
                let mut sc = Scenario::new(algorithm, 3, seed);
                sc.duration = 1_000;
                sc.timeouts.election_spread = spread;
                if let Ok(out) = sim::run(&sc) {
                    splits += out.metrics.split_vote_elections;
                    terms += out.metrics.election_terms;
                    lat.extend(out.metrics.election_latencies);
                }
            }
            let (latency_mean, latency_variance) = mean_and_variance(&lat);
            SplitRow {
                algorithm,
                spread: if algorithm == Algorithm::Raft { spread } else { 0 },
                split_votes: splits,
                contested_terms: terms,
                rate: if terms == 0 { 0.0 } else { splits as f64 / terms as f64 },
                latency_mean,
                latency_variance,
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Hunt {
    pub mutation: Option<String>,
    pub algorithm: Algorithm,
    pub verdict: &'static str,
    pub visited: usize,
    pub steps: Vec<String>,
    pub violations: Vec<String>,
}

/// Random walks over a three-server cluster with two operations and terms
/// up to four, then a bounded exhaustive pass. `mutation` may be empty to
/// check the unmodified algorithm.
pub fn hunt(algorithm: &str, mutation: &str, walks: u64, seed: u64) -> Result<Hunt, String> {
    let mutation: Option<Mutation> = if mutation.is_empty() { None } else { Some(mutation.parse()?) };
    let algorithm = match mutation {
        Some(m) => m.algorithm(),
        None => algorithm.parse()?,
    };
    let mut cfg = ExploreConfig::new(algorithm);
    cfg.walks = walks;
    cfg.walk_seed = seed;
    cfg.strategy = Strategy::DepthFirst;
    cfg.max_states = 50_000;
    cfg.mutations = mutation.map(Mutations::only).unwrap_or_default();
    let r = explore(&cfg);
    let (verdict, steps, violations) = match &r.verdict {
        Verdict::Ok => ("ok", Vec::new(), Vec::new()),
        Verdict::Inconclusive { .. } => ("no counterexample found", Vec::new(), Vec::new()),
        Verdict::Counterexample(cx) => (
            "counterexample",
            cx.actions.iter().map(|a| format!("{a:?}")).collect(),
            cx.violations.iter().map(|v| v.to_string()).collect(),
        ),
    };
    Ok(Hunt {
        mutation: mutation.map(|m| m.to_string()),
        algorithm,
        verdict,
        visited: r.visited,
        steps,
        violations,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = runTimeline)]
pub fn run_timeline(algorithm: &str, n: u32, seed: u32, ops: u32, crash_at: u32, down_for: u32) -> Result<String, JsValue> {
    to_js(timeline(algorithm, n as usize, seed.into(), ops.into(), crash_at.into(), down_for.into()))
}

#[wasm_bindgen(js_name = compareSplitVotes)]
pub fn compare_split_votes(reps: u32, spread: u32) -> Result<String, JsValue> {
    to_js(Ok(split_votes(reps.into(), spread.into())))
}

#[wasm_bindgen(js_name = huntMutation)]
pub fn hunt_mutation(algorithm: &str, mutation: &str, walks: u32, seed: u32) -> Result<String, JsValue> {
    to_js(hunt(algorithm, mutation, walks.into(), seed.into()))
}

#[wasm_bindgen(js_name = mutationIds)]
pub fn mutation_ids() -> String {
    serde_json::to_string(&Mutation::ALL.iter().map(|m| m.slug()).collect::<Vec<_>>()).unwrap_or_default()
}
