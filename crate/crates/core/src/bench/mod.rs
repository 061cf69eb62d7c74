//! Experiment harness: config files, batch runs, comparison tables and
//! training curves.

pub mod config;
pub mod curves;
pub mod run;
pub mod table;

pub use config::{AgentEntry, AgentSpec, Algorithm, EvalBlock, ExperimentConfig, SolverBlock, SystemBlock};
pub use curves::{export_curves, moving_average, write_curves_csv, CurvePoint, DEFAULT_WINDOW};
pub use run::{
    greedy_aoi_action, run_experiment, run_experiment_config, solve_all, solve_system, EvalRecord, ExperimentOutput,
    SolvedSystem, StructureRecord, Summary,
};
pub use table::{compare_table, Cell, ComparisonTable, TableRow};
