//! Comparison apparatus: handcrafted baselines, random search, the DP
//! oracle, run configuration and persistence, reports and the CLI.

pub mod cli;
mod config;
mod oracle;
mod policies;
mod random;
mod report;
mod run;

pub use config::{EvaluatorChoice, RunConfig, KEYS};
pub use oracle::{dp_oracle, grid, OracleResult};
pub use policies::{
    graded_policy, graded_ratios, uniform_policy, uniform_ratios, PolicyName, PolicyPlan, BUDGET_TOLERANCE,
};
pub use random::{random_search, RandomSearchOutcome};
pub use report::report;
pub use run::{
    baseline_file, persist_run, pretrain_checkpoint, read_json, run_baselines, run_oracle, run_random, run_search,
    CommandRecord, FineTuneRecord, OracleRecord, PlanRecord, RunManifest, SearchRun, Workbench, CONFIG_SNAPSHOT,
    FINE_TUNE, MANIFEST, ORACLE, RANDOM_BEST, RANDOM_LOG, RANDOM_SUMMARY,
};
