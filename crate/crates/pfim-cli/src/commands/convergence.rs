use std::f64::consts::TAU;
use std::fs;
use std::time::Instant;

use pfim::metrics::{error_plateau, fitted_order, omega_errors, trajectory_errors};
use pfim::reference::{shooting_solve, steady_state_reference, ShootingConfig};
use pfim::solver::{pfim_solve, PfimConfig, PhaseSpec, StopReason};
use pfim::Error;
use serde_json::Value;

use super::{build_bench, is_numerical, CliError};
use crate::cli::{ConvergenceArgs, Reference};
use crate::output::{self, RunManifest};

const HEADER: &str = "iteration,e_a,e_r,omega,error,omega_error";

/// RK4 steps per period for the shooting reference (and its grid
/// resampling), scaled with the study grid so stiff systems on fine grids
/// get an accurate reference without hand tuning.
fn reference_steps(n_p: usize) -> usize {
    (1 << 14).max(16 * n_p)
}

pub fn run(args: ConvergenceArgs) -> Result<i32, CliError> {
    let bench = build_bench(&args.common)?;
    let sys = bench.system();
    let omega = args.omega.unwrap_or_else(|| bench.default_omega());
    if args.reference == Reference::Steady && sys.autonomous() {
        return Err(Error::InvalidParameter(
            "a settled reference needs a known drive frequency; use --ref shooting".into(),
        )
        .into());
    }
    let guess = bench.initial_guess(omega, args.np)?;

    let mut manifest = RunManifest::new("convergence", bench.name());
    manifest.parameters = bench.params().clone();
    manifest.set_config("np", args.np as u64);
    manifest.set_config("omega", omega);
    manifest.set_config("tol_a", args.tol_a);
    manifest.set_config("tol_r", args.tol_r);
    manifest.set_config("max_iter", args.max_iter as u64);
    manifest.set_config(
        "reference",
        match args.reference {
            Reference::Shooting => "shooting",
            Reference::Steady => "steady",
        },
    );

    let phase = if sys.autonomous() {
        PhaseSpec::Autonomous
    } else {
        PhaseSpec::Forced
    };
    let cfg = PfimConfig {
        tol_a: args.tol_a,
        tol_r: args.tol_r,
        max_iter: args.max_iter,
        record_history: true,
        record_iterates: true,
        ..PfimConfig::default()
    };

    fs::create_dir_all(&args.common.out)?;
    let write_failure = |manifest: &mut RunManifest, stage: &str, e: &Error| -> Result<i32, CliError> {
        fs::write(args.common.out.join("convergence.csv"), format!("{HEADER}\n"))?;
        manifest.set_result(stage, e.to_string());
        manifest.write(&args.common.out.join("manifest.json"))?;
        Ok(2)
    };

    let started = Instant::now();
    let res = match pfim_solve(sys, guess, &phase, &cfg) {
        Ok(res) => res,
        Err(e) if is_numerical(&e) => return write_failure(&mut manifest, "study_error", &e),
        Err(e) => return Err(e.into()),
    };
    manifest.set_timing("study", started.elapsed().as_secs_f64() * 1e3);

    // The reference is computed once, seeded from the study result so both
    // land on the same orbit; the study grid is filled by integration.
    let started = Instant::now();
    let reference = match args.reference {
        Reference::Shooting => {
            let scfg = ShootingConfig {
                n_s: reference_steps(args.np),
                ..ShootingConfig::default()
            };
            shooting_solve(
                sys,
                &res.trajectory.sample(0).clone_owned(),
                TAU / res.trajectory.omega(),
                &scfg,
            )
            .and_then(|sol| {
                manifest.set_result("reference_omega", sol.omega());
                sol.sample_grid(sys, args.np, scfg.n_s)
            })
        }
        Reference::Steady => {
            manifest.set_result("reference_omega", omega);
            steady_state_reference(sys, omega, args.np, 400, reference_steps(args.np))
        }
    };
    let reference = match reference {
        Ok(r) => r,
        Err(e) if is_numerical(&e) => return write_failure(&mut manifest, "reference_error", &e),
        Err(e) => return Err(e.into()),
    };
    manifest.set_timing("reference", started.elapsed().as_secs_f64() * 1e3);

    let errors = trajectory_errors(&res.iterates, &reference, bench.amplitude_index())?;
    let omega_errs = omega_errors(&res.iterates, reference.omega());
    let rows: Vec<Vec<String>> = res
        .history
        .iter()
        .zip(errors.iter().zip(&omega_errs))
        .map(|(rec, (&err, &werr))| {
            vec![
                rec.iteration.to_string(),
                output::fmt(rec.e_a),
                output::fmt(rec.e_r),
                output::fmt(rec.omega),
                output::fmt(err),
                output::fmt(werr),
            ]
        })
        .collect();
    output::write_csv(&args.common.out.join("convergence.csv"), HEADER, &rows)?;

    let order = fitted_order(&errors);
    let plateau = error_plateau(&errors);
    manifest.set_result("iterations", res.iterations as u64);
    manifest.set_result("stop_reason", format!("{:?}", res.stop_reason));
    manifest.set_result("converged", res.converged);
    manifest.set_result("fitted_order", order.map(Value::from).unwrap_or(Value::Null));
    manifest.set_result("error_plateau", plateau);
    manifest.write(&args.common.out.join("manifest.json"))?;

    match order {
        Some(p) => println!(
            "{}: fitted order {:.3}, error plateau {:.3e}, {} iterations",
            bench.name(),
            p,
            plateau,
            res.iterations
        ),
        None => println!(
            "{}: too few informative steps to fit an order, error plateau {:.3e}, {} iterations",
            bench.name(),
            plateau,
            res.iterations
        ),
    }

    // Running out of budget is a completed study; only leaving the basin is
    // a failed one.
    Ok(if res.stop_reason == StopReason::Diverged {
        2
    } else {
        0
    })
}
