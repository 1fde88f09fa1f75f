mod compare;
mod convergence;
mod solve;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use pfim::benchmarks::Benchmark;
use pfim::system::PeriodicTrajectory;
use pfim::Error;

use crate::cli::{Cli, Command, CommonArgs};
use crate::output;

pub fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve(args) => solve::run(args),
        Command::Convergence(args) => convergence::run(args),
        Command::Continue(args) => sweep::run(args),
        Command::Compare(args) => compare::run(args),
    }
}

#[derive(Debug)]
pub enum CliError {
    Solver(Error),
    Io(io::Error),
}

impl CliError {
    /// 1 for configuration mistakes the user can fix by editing the
    /// command, 2 for numerical failure of a well-posed run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Solver(e) if is_numerical(e) => 2,
            CliError::Solver(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Solver(e) => e.fmt(f),
            CliError::Io(e) => e.fmt(f),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Solver(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

/// True when the error reflects the run going numerically wrong rather than
/// the command being malformed; such runs still write their manifest.
pub fn is_numerical(e: &Error) -> bool {
    !matches!(
        e,
        Error::UnknownSystem(_)
            | Error::UnknownSystemParameter { .. }
            | Error::InvalidParameter(_)
            | Error::GridTooCoarse { .. }
    )
}

pub fn build_bench(common: &CommonArgs) -> Result<Benchmark, CliError> {
    let overrides: BTreeMap<String, f64> = common.params.iter().cloned().collect();
    Ok(Benchmark::build(&common.system, &overrides)?)
}

pub fn solution_header(dim: usize) -> String {
    let mut h = String::from("tau");
    for s in 0..dim {
        h.push_str(&format!(",x{s}"));
    }
    h
}

/// Grid rows including the duplicated endpoint, so a plotted orbit closes.
pub fn solution_rows(traj: &PeriodicTrajectory) -> Vec<Vec<String>> {
    let n_p = traj.n_p();
    (0..=n_p)
        .map(|i| {
            let tau = std::f64::consts::TAU * i as f64 / n_p as f64;
            let mut row = vec![output::fmt(tau)];
            row.extend(traj.sample(i).iter().map(|&v| output::fmt(v)));
            row
        })
        .collect()
}
