//! Batch pipeline around the `pricegraph` library: configuration, cached
//! feature stages, training, evaluation and backtests, each run recorded in
//! its own directory.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod run;

pub use commands::{Command, Outcome};
pub use config::{Config, ConfigError};

/// Process exit status for an error: 1 for validation problems, 2 for
/// runtime failures.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.chain().any(|c| c.downcast_ref::<ConfigError>().is_some()) {
        1
    } else {
        2
    }
}
