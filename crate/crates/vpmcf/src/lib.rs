//! File formats, scenario runner and command line for `vpmcf`.

pub mod cli;
pub mod config;
pub mod oracle_cmd;
pub mod output;
pub mod runner;

pub use config::{ConfigError, RunConfig};
pub use runner::{run_scenario, ExitStatus, Outcome};
