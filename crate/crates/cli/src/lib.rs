//! Configuration-driven front end: solve, diagnose, the two-component
//! example pipeline, homogeneous classification and hodograph studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod commands;
pub mod config;
mod error;

pub use checks::{flattest_hodograph_study, run_checks, DiagnoseOutput, HodographStudy};
pub use commands::{
    cmd_diagnose, cmd_figure1, cmd_hodograph, cmd_homogeneous, cmd_solve, init_threads,
    load_solution, solution_dir, FIGURE1_RESOLUTION, HOMOGENEOUS_NODES,
};
pub use config::{parse_config, parse_config_str, DiagnosticsConfig, RunConfig, ALL_CHECKS};
pub use error::CliError;
