use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use levelshift_cli::{run, write_atomic, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = run(&cli).and_then(|o| {
        match &cli.out {
            Some(path) => write_atomic(path, &o.text)?,
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(o.text.as_bytes()).map_err(|e| levelshift_cli::CliError::Io(e.to_string()))?;
            }
        }
        Ok(o)
    });
    match outcome {
        Ok(o) => {
            if let Some(d) = o.diagnostic {
                eprintln!("levelshift: {d}");
            }
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("levelshift: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
