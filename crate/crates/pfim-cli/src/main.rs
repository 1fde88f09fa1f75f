//! Command-line front end for the periodic-orbit solvers: single solves,
//! per-iteration convergence studies, frequency sweeps, and method/effort
//! comparisons, each writing CSV files plus a JSON run manifest.

mod cli;
mod commands;
mod output;

use clap::Parser;

fn main() {
    let parsed = match cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap exits 2 on usage errors by default; this tool reserves 2
            // for numerical failure, so print and remap. Help and version
            // requests land here too and stay exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match commands::dispatch(parsed) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
