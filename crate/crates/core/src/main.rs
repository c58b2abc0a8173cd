use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use manhattan_cell::cli::{exit_code, run, Cli, Outcome};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli).context("manhattan-cell failed") {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Validation(report)) => {
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} validation check(s) failed", report.failures().count());
                ExitCode::from(2)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<manhattan_cell::Error>()
                .map_or(1, exit_code);
            ExitCode::from(code)
        }
    }
}
