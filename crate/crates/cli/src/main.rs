use std::process::ExitCode;

use clap::Parser;
use noisesig_cli::{exit_code, run, Cli, EX_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EX_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("noisesig: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
