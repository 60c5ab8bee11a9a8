//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use vpmcf_core::{build_profile, validate};

use crate::config::{RunConfig, OUTPUT_DIR_ENV};
use crate::oracle_cmd::{self, OracleCommand};
use crate::output::Diagnostic;
use crate::runner::{self, ExitStatus};

#[derive(Debug, Parser)]
#[command(name = "vpmcf", version, about = "Axially symmetric volume-preserving mean curvature flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config value, e.g. `--set policy.cfl_safety=0.3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Parse a scenario file and check its initial curve.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Reference values for round shapes and refinement studies.
    Oracle {
        #[command(subcommand)]
        kind: OracleCommand,
    },
}

fn config_failure(message: String) -> i32 {
    eprintln!("error: {message}");
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        let diag = Diagnostic {
            exit_code: ExitStatus::Usage.code(),
            reason: String::from("usage_or_config_error"),
            message,
            neck_node: None,
            neck_r: None,
            last_state: None,
            monitor: None,
        };
        let _ = runner::write_diagnostic(&PathBuf::from(dir), &diag);
    }
    ExitStatus::Usage.code()
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitStatus::Usage.code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config, set } => {
            let cfg = match RunConfig::load(&config, &set) {
                Ok(c) => c,
                Err(e) => return config_failure(e.to_string()),
            };
            let out = runner::run_scenario(&cfg);
            let summary = out.final_state.as_ref();
            println!(
                "{:?}: {} (t = {}, step = {}, output {})",
                out.status,
                out.message,
                summary.map_or(0.0, |s| s.t),
                summary.map_or(0, |s| s.step),
                out.output_dir.display()
            );
            out.status.code()
        }
        Command::Validate { config, set } => {
            let cfg = match RunConfig::load(&config, &set) {
                Ok(c) => c,
                Err(e) => return config_failure(e.to_string()),
            };
            let curve = match build_profile(&cfg.shape()) {
                Ok(c) => c,
                Err(e) => return config_failure(format!("invalid scenario: {e}")),
            };
            let report = validate(&curve);
            for c in &report.checks {
                println!(
                    "{:<16} {:<4} {:?} {}",
                    c.name,
                    if c.passed { "ok" } else { "FAIL" },
                    c.severity,
                    c.detail
                );
            }
            if report.is_valid() {
                0
            } else {
                config_failure(String::from("initial curve is invalid"))
            }
        }
        Command::Oracle { kind } => match oracle_cmd::execute(&kind) {
            Ok(text) => {
                print!("{text}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitStatus::Usage.code()
            }
        },
    }
}
