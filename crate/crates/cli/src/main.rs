use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use paxraft::check::Strategy;
use paxraft::{Algorithm, Mutation};
use paxraft_cli::{cmd_bench, cmd_explore, cmd_run, ExploreArgs, RunOverrides, Status};

/// Simulate, check and compare Raft-style Paxos and Raft.
///
/// Exit status: 0 no violations, 1 usage or config error, 2 violations or
/// counterexample found, 3 exploration inconclusive.
#[derive(Parser)]
#[command(name = "paxraft", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    Paxos,
    Raft,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::Paxos => Algorithm::Paxos,
            AlgArg::Raft => Algorithm::Raft,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Bfs,
    Dfs,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario file and check the trace.
    Run {
        file: PathBuf,
        /// Overrides `seed` in the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `algorithm`; required when the file says "both".
        #[arg(long, value_enum)]
        algorithm: Option<AlgArg>,
        /// Overrides `duration`.
        #[arg(long)]
        duration: Option<u64>,
        /// Enable a deliberate bug, e.g. raft-no-commit-term-guard. Repeatable.
        #[arg(long, value_parser = parse_mutation)]
        mutation: Vec<Mutation>,
        /// Receives trace.ndjson, metrics.tsv and violations.json.
        #[arg(long, default_value = "paxraft-out")]
        out: PathBuf,
    },
    /// Search every interleaving of a small cluster for a safety violation.
    Explore {
        /// Defaults to the mutation's algorithm, else raft.
        #[arg(long, value_enum)]
        algorithm: Option<AlgArg>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Client operations available to leaders.
        #[arg(long, default_value_t = 2)]
        ops: u64,
        #[arg(long, default_value_t = 4)]
        max_term: u64,
        /// Maximum transitions along one branch.
        #[arg(long, default_value_t = 200)]
        depth: usize,
        #[arg(long, value_parser = parse_mutation)]
        mutation: Option<Mutation>,
        /// Crash-and-restart budget per branch.
        #[arg(long, default_value_t = 1)]
        crashes: u8,
        /// Message-loss budget per branch.
        #[arg(long, default_value_t = 0)]
        drops: u8,
        #[arg(long, default_value_t = 20_000_000)]
        max_states: usize,
        /// Deduplicate on full state bytes rather than 128-bit digests.
        #[arg(long)]
        exact: bool,
        /// Do not merge Raft states that differ only by server names.
        #[arg(long)]
        no_symmetry: bool,
        #[arg(long, value_enum, default_value = "dfs")]
        strategy: StrategyArg,
        /// Random walks tried before the exhaustive search.
        #[arg(long, default_value_t = 200_000)]
        walks: u64,
        #[arg(long, default_value_t = 0)]
        walk_seed: u64,
        /// Receives the counterexample trace, violations and actions.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a comparison document (algorithm = "both") over paired seeds.
    Bench {
        file: PathBuf,
        #[arg(long, default_value_t = 100)]
        reps: u64,
        /// Receives comparison.csv and runs.csv.
        #[arg(long, default_value = "paxraft-bench")]
        out: PathBuf,
    },
}

fn parse_mutation(s: &str) -> Result<Mutation, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Status::Usage as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { file, seed, algorithm, duration, mutation, out } => {
            let o = RunOverrides { seed, algorithm: algorithm.map(Into::into), duration, mutations: mutation };
            cmd_run(&file, &o, &out)
        }
        Command::Explore {
            algorithm,
            n,
            ops,
            max_term,
            depth,
            mutation,
            crashes,
            drops,
            max_states,
            exact,
            no_symmetry,
            strategy,
            walks,
            walk_seed,
            out,
        } => cmd_explore(&ExploreArgs {
            algorithm: algorithm.map(Into::into),
            n,
            ops,
            max_term,
            depth,
            crashes,
            drops,
            max_states,
            exact,
            symmetry: !no_symmetry,
            strategy: match strategy {
                StrategyArg::Bfs => Strategy::BreadthFirst,
                StrategyArg::Dfs => Strategy::DepthFirst,
            },
            walks,
            walk_seed,
            mutation,
            out,
        }),
        Command::Bench { file, reps, out } => cmd_bench(&file, reps, &out),
    };
    match result {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Status::Usage as u8)
        }
    }
}
