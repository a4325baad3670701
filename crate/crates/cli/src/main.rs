use std::process::ExitCode;

use clap::Parser;
use eigenmatrix_cli::{execution_for, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.command.args().threads;
    if let Some(n) = threads {
        if let Err(e) = eigenmatrix::exec::configure_threads(n) {
            eprintln!("error: invalid value for `--threads`: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli.command, execution_for(threads)) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
