use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sysid_harness::Command;

#[derive(Parser)]
#[command(
    name = "sysid",
    version,
    about = "Maximum-likelihood identification of state-space models"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `output_dir` relative to the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock times in the outputs.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize the configured datasets with truth sidecars.
    Simulate(Common),
    /// Run the configured optimizer and write a report and trace.
    Identify(Common),
    /// Simulate at an estimate and report RMSE per channel.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Take the estimate from this identification report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Repeat likelihood estimates across particle counts.
    CompareFilters(Common),
    /// Repeat identification runs for each optimizer variant.
    CompareOptimizers(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, report) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c, None),
        Cmd::Identify(c) => (Command::Identify, c, None),
        Cmd::Validate { common, report } => (Command::Validate, common, report),
        Cmd::CompareFilters(c) => (Command::CompareFilters, c, None),
        Cmd::CompareOptimizers(c) => (Command::CompareOptimizers, c, None),
    };
    match sysid_harness::run(command, &common.config, common.seed, common.out, common.timing, report) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
