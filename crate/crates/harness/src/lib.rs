//! Experiment plumbing behind the `aaa` binary: configuration, the four
//! subcommands and report files.

pub mod commands;
pub mod config;
pub mod report;

use aaa_core::{Error, ErrorClass};

pub use commands::{cmd_ablate, cmd_eval, cmd_generate, cmd_train};
pub use config::{ClassifierSetting, DatasetSource, ExperimentConfig, Mode, Overrides};
pub use report::{AblationSummary, MetricsReport};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numeric => EXIT_NUMERIC,
    }
}
