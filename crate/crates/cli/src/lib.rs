//! Batch front-end: dataset synthesis, identification runs, validation and
//! the filter and optimizer comparison experiments.
//!
//! The `sysid` binary is a thin wrapper over [`run`]; tests drive the same
//! entry points directly.

pub mod commands;
pub mod config;
pub mod error;
pub mod profile;
pub mod setup;
pub mod stats;

use std::path::PathBuf;

pub use commands::Options;
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use setup::Setup;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Identify,
    Validate,
    CompareFilters,
    CompareOptimizers,
}

/// Loads `config`, applies the overrides and runs one subcommand.
///
/// Returns the summary line printed by the binary.
pub fn run(
    command: Command,
    config: &std::path::Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    timing: bool,
    report: Option<PathBuf>,
) -> Result<String> {
    let setup = Setup::from_file(config, seed)?;
    let out_dir = out.unwrap_or_else(|| setup.base_dir.join(&setup.config.output_dir));
    let opts = Options {
        out_dir,
        timing,
        report,
    };
    let dir = opts.out_dir.display();
    Ok(match command {
        Command::Simulate => {
            let files = commands::simulate_datasets(&setup, &opts)?;
            format!("wrote {} files to {dir}", files.len())
        }
        Command::Identify => {
            let id = commands::identify(&setup, &opts)?;
            format!(
                "{} evaluations, L(theta_hat) = {}; report in {dir}",
                id.report.evaluations, id.report.log_likelihood
            )
        }
        Command::Validate => {
            let rows = commands::validate(&setup, &opts)?;
            rows.iter()
                .map(|r| format!("{} {}: rmse {}", r.dataset, r.channel, r.rmse))
                .collect::<Vec<_>>()
                .join("\n")
        }
        Command::CompareFilters => {
            let cells = commands::compare_filters(&setup, &opts)?;
            format!("{} cells written to {dir}", cells.len())
        }
        Command::CompareOptimizers => {
            let out = commands::compare_optimizers(&setup, &opts)?;
            format!("{} runs written to {dir}", out.runs.len())
        }
    })
}
