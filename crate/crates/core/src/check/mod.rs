//! Safety oracles over traces and a bounded exhaustive explorer.

pub mod explore;
pub mod oracles;

pub use explore::{explore, Action, Counterexample, ExploreConfig, ExploreReport, Strategy, Verdict};
pub use oracles::{
    check_all, check_committed_overwrite, check_election_safety, check_internal_faults,
    check_leader_completeness, check_log_matching, check_state_machine_safety, check_term_purity,
    check_vote_per_term, Violation, ViolationKind,
};
