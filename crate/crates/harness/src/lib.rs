//! Scenario loading, experiment runs, bound verdicts and output files for
//! the `unisched` command.

pub mod experiment;
pub mod output;
pub mod scenario;

pub use experiment::{evaluate, frame_table, run_experiment, running_objective, simulate, sweep_v, ExperimentReport, Status, Verdict};
pub use output::emit_outputs;
pub use scenario::{load_scenario, load_with, Overrides, Scenario, ScenarioFile};
