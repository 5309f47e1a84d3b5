//! Experiment runner for the `swag` command: dataset generation, seeded
//! training runs that score base / SWA / SWAG from one trajectory, and
//! per-example inspection of the resulting reports.

pub mod config;
pub mod gen;
pub mod inspect;
pub mod manifest;
pub mod report;
pub mod run;

use swag_core::{Error, ErrorKind};

pub use config::{ExperimentConfig, ModelConfig, RunOverrides};
pub use gen::{cmd_gen, GenConfig};
pub use inspect::cmd_inspect;
pub use report::{cmd_eval, cmd_export};
pub use run::{cmd_run, RunOptions, RunOutcome};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code_for(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Numeric => EXIT_NUMERIC,
        // unreadable or unwritable files count as data problems
        ErrorKind::Data | ErrorKind::Io => EXIT_DATA,
    }
}

pub fn exit_code(err: &Error) -> i32 {
    exit_code_for(err.kind())
}
