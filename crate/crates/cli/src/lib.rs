//! The `spectra` command: automatic control-point matching, rendering and
//! quality metrics for hyperspectral cubes.

pub mod args;
mod commands;
pub mod exit;
pub mod report;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command, MatchArgs, MetricsArgs, RenderArgs};
pub use commands::{cmd_match, cmd_metrics, cmd_render};
pub use exit::{CliError, ExitCode};
pub use report::{default_report_path, RunReport};

/// Runs the command on a pool of `cli.threads` workers and writes its report.
///
/// Match and render reports go to `--report` or `<output>.report.json`;
/// metrics reports are only written when `--report` is given.
pub fn run(cli: &Cli) -> Result<RunReport, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::internal(format!("cannot start worker threads: {e}")))?;
    let (report, path) = pool.install(|| -> Result<_, CliError> {
        Ok(match &cli.command {
            Command::Match(a) => (cmd_match(a)?, Some(a.report.clone().unwrap_or_else(|| default_report_path(&a.out)))),
            Command::Render(a) => (cmd_render(a)?, Some(a.report.clone().unwrap_or_else(|| default_report_path(&a.out)))),
            Command::Metrics(a) => (cmd_metrics(a)?, a.report.clone()),
        })
    })?;
    if let Some(path) = path {
        report.write(&path)?;
    }
    Ok(report)
}

/// Parses `args` (program name first), runs, and returns the process exit status.
///
/// Warnings go to stderr. The metrics command prints its metric report as
/// JSON on stdout.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::Success.code(),
                _ => ExitCode::Usage.code(),
            };
        }
    };
    match run(&cli) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if matches!(cli.command, Command::Metrics(_)) {
                println!("{}", serde_json::to_string_pretty(&report.details).unwrap_or_default());
            }
            ExitCode::Success.code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code.code()
        }
    }
}
