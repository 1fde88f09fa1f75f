use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "pfim-cli", version, about, disable_help_subcommand = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Solve one periodic orbit; writes solution.csv, history.csv, manifest.json
    Solve(SolveArgs),
    /// Per-iteration error study against a reference; writes convergence.csv
    Convergence(ConvergenceArgs),
    /// Arclength sweep over a frequency range; writes branch.csv
    Continue(ContinueArgs),
    /// Error and wall-time across methods and resolutions; writes compare.csv
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Benchmark system name (see the catalog in the README)
    #[arg(long)]
    pub system: String,

    /// Directory the CSV files and manifest are written into
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Override a system parameter, e.g. --param damping=0.2 (repeatable)
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,

    /// Reserved; every algorithm here is deterministic
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pfim,
    Hbm,
    Shooting,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    Shooting,
    Steady,
}

#[derive(Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, value_enum, default_value_t = Method::Pfim)]
    pub method: Method,

    /// Grid intervals per period (also the output grid for hbm/shooting)
    #[arg(long, default_value_t = 1024)]
    pub np: usize,

    /// Harmonic count; required for --method hbm
    #[arg(long)]
    pub harmonics: Option<usize>,

    /// Excitation frequency; defaults to the benchmark's operating point
    #[arg(long)]
    pub omega: Option<f64>,

    /// Stop when the node-averaged residual drops below this
    #[arg(long)]
    pub tol_a: Option<f64>,

    /// Stop when the mean relative correction drops below this
    #[arg(long)]
    pub tol_r: Option<f64>,

    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, default_value_t = 4096)]
    pub np: usize,

    #[arg(long)]
    pub omega: Option<f64>,

    /// Reference the per-iteration errors are measured against
    #[arg(long = "ref", value_enum, default_value_t = Reference::Shooting)]
    pub reference: Reference,

    /// Deliberately below the residual roundoff floor so the study walks
    /// all the way down to its discretization error
    #[arg(long, default_value_t = 1e-16)]
    pub tol_a: f64,

    #[arg(long, default_value_t = 1e-7)]
    pub tol_r: f64,

    #[arg(long, default_value_t = 30)]
    pub max_iter: usize,
}

#[derive(Args)]
pub struct ContinueArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Frequency window swept by arclength continuation
    #[arg(long, value_name = "START:END", value_parser = parse_omega_range)]
    pub omega_range: (f64, f64),

    /// Initial arclength step
    #[arg(long, default_value_t = 0.02)]
    pub ds: f64,

    #[arg(long, default_value_t = 1e-4)]
    pub ds_min: f64,

    #[arg(long, default_value_t = 0.1)]
    pub ds_max: f64,

    #[arg(long, default_value_t = 512)]
    pub np: usize,

    /// Stop after this many accepted branch points even mid-window
    #[arg(long, default_value_t = 2000)]
    pub max_points: usize,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Grid resolutions for the iterative-matrix rows
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "32,64,128,256,512,1024,2048,4096"
    )]
    pub np: Vec<usize>,

    /// Harmonic counts for the harmonic-balance rows
    #[arg(long, value_delimiter = ',')]
    pub harmonics: Vec<usize>,

    #[arg(long)]
    pub omega: Option<f64>,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    let value: f64 = value
        .parse()
        .map_err(|_| format!("{value:?} is not a number"))?;
    Ok((key.to_string(), value))
}

fn parse_omega_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected START:END, got {s:?}"))?;
    let a: f64 = a.parse().map_err(|_| format!("{a:?} is not a number"))?;
    let b: f64 = b.parse().map_err(|_| format!("{b:?} is not a number"))?;
    Ok((a, b))
}
