//! Scenario documents, builtin scenarios, verdicts and report output.

pub mod build;
pub mod builtin;
pub mod config;
pub mod output;
pub mod run;

pub use build::{build_scenario, BuiltScenario, Dynamics};
pub use builtin::{builtin_scenario, list_scenarios, BUILTINS};
pub use config::{
    CheckConfig, Expectation, FunctionDef, InitialCondition, ManifoldConfig, ProblemConfig, RunConfig, ScenarioConfig,
};
pub use output::{run_with_threads, threads_from_env, trajectory_csv, write_outputs, THREADS_ENV};
pub use run::{
    run_scenario, CheckResult, EscapeSummary, InitialConditionReport, RunOutcome, RunReport, Verdict, FORMAT_TAG,
};
