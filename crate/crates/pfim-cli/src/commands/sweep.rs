use std::fs;
use std::time::Instant;

use pfim::continuation::{continue_branch, BranchOutcome, ContinuationConfig};

use super::{build_bench, is_numerical, CliError};
use crate::cli::ContinueArgs;
use crate::output::{self, RunManifest};

const HEADER: &str = "omega,amplitude,stable,max_multiplier_abs,iterations";

pub fn run(args: ContinueArgs) -> Result<i32, CliError> {
    let bench = build_bench(&args.common)?;
    let sys = bench.system();
    let (omega_start, omega_end) = args.omega_range;

    let mut cfg = ContinuationConfig::new(omega_start, omega_end);
    cfg.ds = args.ds;
    cfg.ds_min = args.ds_min;
    cfg.ds_max = args.ds_max;
    cfg.n_p = args.np;
    cfg.max_points = args.max_points;

    // Configuration failures (bad step bounds, autonomous system, coarse
    // grid) surface inside continue_branch before any point is solved, and
    // all file writes happen after it returns, so they leave no files.
    let guess = bench.initial_guess(omega_start, args.np)?;

    let mut manifest = RunManifest::new("continue", bench.name());
    manifest.parameters = bench.params().clone();
    manifest.set_config("omega_start", omega_start);
    manifest.set_config("omega_end", omega_end);
    manifest.set_config("ds", cfg.ds);
    manifest.set_config("ds_min", cfg.ds_min);
    manifest.set_config("ds_max", cfg.ds_max);
    manifest.set_config("np", cfg.n_p as u64);
    manifest.set_config("max_points", cfg.max_points as u64);

    let started = Instant::now();
    let branch = continue_branch(sys, guess, bench.amplitude_index(), &cfg);
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

    let branch = match branch {
        Ok(b) => b,
        Err(e) if is_numerical(&e) => {
            // Even the seed point failed; keep the empty file set readable.
            fs::create_dir_all(&args.common.out)?;
            fs::write(args.common.out.join("branch.csv"), format!("{HEADER}\n"))?;
            manifest.set_timing("sweep", elapsed_ms);
            manifest.set_result("error", e.to_string());
            manifest.write(&args.common.out.join("manifest.json"))?;
            return Ok(2);
        }
        Err(e) => return Err(e.into()),
    };

    let rows: Vec<Vec<String>> = branch
        .points
        .iter()
        .map(|p| {
            vec![
                output::fmt(p.omega),
                output::fmt(p.amplitude),
                if p.stable { "1" } else { "0" }.to_string(),
                output::fmt(p.max_multiplier_abs()),
                p.iterations.to_string(),
            ]
        })
        .collect();
    fs::create_dir_all(&args.common.out)?;
    output::write_csv(&args.common.out.join("branch.csv"), HEADER, &rows)?;

    manifest.set_timing("sweep", elapsed_ms);
    manifest.set_result("points", branch.points.len() as u64);
    let code = match branch.outcome {
        BranchOutcome::CompletedSweep => {
            manifest.set_result("outcome", "completed");
            0
        }
        BranchOutcome::MaxPoints => {
            manifest.set_result("outcome", "max_points");
            2
        }
        BranchOutcome::Stalled { omega } => {
            manifest.set_result("outcome", "stalled");
            manifest.set_result("stalled_at_omega", omega);
            2
        }
    };
    manifest.write(&args.common.out.join("manifest.json"))?;
    Ok(code)
}
