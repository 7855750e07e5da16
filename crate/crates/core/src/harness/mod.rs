//! Seeded experiment harness behind the `minfo` binary.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure.

mod config;
mod emit;
mod run;

pub use config::{
    default_rho_grid, default_sigma_grid, parse_config, Experiment, OutputFormat, OutputTarget,
    RunConfig,
};
pub use emit::{emit, parse_json_rows, render, write_output, ResultRow, CSV_HEADER};
pub use run::{
    execute, run_complexity, run_equitability, run_estimate, run_gradcheck, run_ksg, run_sweep,
    ComplexityRow, GradcheckRow, RunOutcome, GRADCHECK_TOL,
};

use crate::error::MinfoError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(err: &MinfoError) -> i32 {
    match err {
        MinfoError::Config { .. } | MinfoError::Argument { .. } | MinfoError::Io(_) => EXIT_CONFIG,
        MinfoError::Shape { .. } | MinfoError::Numeric { .. } | MinfoError::Diverged { .. } => {
            EXIT_NUMERIC
        }
    }
}
