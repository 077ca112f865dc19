//! Scenario files and the `run`, `explore` and `bench` subcommands.

pub mod commands;
pub mod file;

pub use commands::{bench, cmd_bench, cmd_explore, cmd_run, BenchReport, ExploreArgs, RunOverrides, Status};
pub use file::ScenarioFile;
