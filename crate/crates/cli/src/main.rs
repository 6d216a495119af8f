use std::process::ExitCode;

use clap::Parser;
use explicd_cli::{execute, exit_code, Cli, GradCheckFailed};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            if let Some(failed) = err.downcast_ref::<GradCheckFailed>() {
                print!("{}", failed.report);
            }
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
