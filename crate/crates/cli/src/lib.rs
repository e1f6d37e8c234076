//! Command-line driver: synthesize or extract a corpus, train, evaluate and
//! explain, all from one flat config file.

pub mod commands;
pub mod config;

pub use commands::{cmd_eval, cmd_explain, cmd_extract, cmd_synth, cmd_train};
pub use config::{keys_help, Experiment, RunConfig, KEYS};

use sxai_core::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Process exit code for an error: 2 config, 3 data, 4 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_DATA,
    }
}
