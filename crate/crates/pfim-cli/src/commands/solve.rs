use std::f64::consts::TAU;
use std::fs;
use std::time::Instant;

use pfim::benchmarks::Benchmark;
use pfim::reference::{hbm_solve_traced, shooting_solve, FourierSolution, HbmConfig, ShootingConfig};
use pfim::solver::{pfim_solve, PfimConfig, PhaseSpec};
use pfim::system::{residual, PeriodicTrajectory};
use pfim::Error;
use serde_json::Value;

use super::{build_bench, is_numerical, solution_header, solution_rows, CliError};
use crate::cli::{Method, SolveArgs};
use crate::output::{self, RunManifest};

const HISTORY_HEADER: &str = "iteration,e_a,e_r,omega";

pub fn run(args: SolveArgs) -> Result<i32, CliError> {
    let bench = build_bench(&args.common)?;
    let sys = bench.system();
    let omega = args.omega.unwrap_or_else(|| bench.default_omega());
    if args.method == Method::Hbm && args.harmonics.is_none() {
        return Err(Error::InvalidParameter(
            "--method hbm needs --harmonics".into(),
        )
        .into());
    }
    // Build the guess before touching the filesystem: a grid that is too
    // coarse is a configuration mistake and should leave no files behind.
    let guess = bench.initial_guess(omega, args.np)?;

    let mut manifest = RunManifest::new("solve", bench.name());
    manifest.parameters = bench.params().clone();
    manifest.set_config(
        "method",
        match args.method {
            Method::Pfim => "pfim",
            Method::Hbm => "hbm",
            Method::Shooting => "shooting",
        },
    );
    manifest.set_config("np", args.np as u64);
    manifest.set_config("omega", omega);
    if let Some(h) = args.harmonics {
        manifest.set_config("harmonics", h as u64);
    }

    fs::create_dir_all(&args.common.out)?;
    let started = Instant::now();
    let outcome = match args.method {
        Method::Pfim => solve_pfim(&args, &bench, guess, &mut manifest),
        Method::Hbm => solve_hbm(&args, &bench, omega, &guess, &mut manifest),
        Method::Shooting => solve_shooting(&args, &bench, omega, &guess, &mut manifest),
    };
    manifest.set_timing("solve", started.elapsed().as_secs_f64() * 1e3);

    let code = match outcome {
        Ok(Solved {
            trajectory,
            history,
            converged,
        }) => {
            // e_a averages signed residual vectors, so pointwise error can
            // hide behind cancellation; the max norm has no such blind spot.
            if let Ok(resid) = residual(sys, &trajectory) {
                let e_max = resid.iter().map(|r| r.amax()).fold(0.0f64, f64::max);
                manifest.set_result("max_residual", e_max);
            }
            write_files(&args, &trajectory, &history)?;
            manifest.set_result("converged", converged);
            if converged {
                0
            } else {
                2
            }
        }
        Err(e) if is_numerical(&e) => {
            // Keep the file set complete so downstream tooling can always
            // read headers, and record what went wrong in the manifest.
            fs::write(
                args.common.out.join("solution.csv"),
                format!("{}\n", solution_header(sys.dim())),
            )?;
            fs::write(
                args.common.out.join("history.csv"),
                format!("{HISTORY_HEADER}\n"),
            )?;
            manifest.set_result("converged", false);
            manifest.set_result("error", e.to_string());
            2
        }
        Err(e) => return Err(e.into()),
    };
    manifest.write(&args.common.out.join("manifest.json"))?;
    Ok(code)
}

struct Solved {
    trajectory: PeriodicTrajectory,
    history: Vec<Vec<String>>,
    converged: bool,
}

fn write_files(args: &SolveArgs, traj: &PeriodicTrajectory, history: &[Vec<String>]) -> Result<(), CliError> {
    output::write_csv(
        &args.common.out.join("solution.csv"),
        &solution_header(traj.dim()),
        &solution_rows(traj),
    )?;
    output::write_csv(&args.common.out.join("history.csv"), HISTORY_HEADER, history)?;
    Ok(())
}

fn solve_pfim(
    args: &SolveArgs,
    bench: &Benchmark,
    guess: PeriodicTrajectory,
    manifest: &mut RunManifest,
) -> Result<Solved, Error> {
    let sys = bench.system();
    let phase = if sys.autonomous() {
        PhaseSpec::Autonomous
    } else {
        PhaseSpec::Forced
    };
    // The library default tol_r targets smooth problems; the catalog's
    // non-smooth systems correct in slowly decaying tails that would burn
    // the whole budget chasing it. 1e-6 stops once updates fall to the
    // discretization-floor scale across the catalog.
    let mut cfg = PfimConfig {
        tol_r: 1e-6,
        record_history: true,
        ..PfimConfig::default()
    };
    if let Some(t) = args.tol_a {
        cfg.tol_a = t;
    }
    if let Some(t) = args.tol_r {
        cfg.tol_r = t;
    }
    if let Some(n) = args.max_iter {
        cfg.max_iter = n;
    }
    manifest.set_config("tol_a", cfg.tol_a);
    manifest.set_config("tol_r", cfg.tol_r);
    manifest.set_config("max_iter", cfg.max_iter as u64);

    let res = pfim_solve(sys, guess, &phase, &cfg)?;
    manifest.set_result("iterations", res.iterations as u64);
    manifest.set_result("stop_reason", format!("{:?}", res.stop_reason));
    manifest.set_result("omega", res.trajectory.omega());
    manifest.set_result(
        "amplitude",
        res.trajectory.component_amplitude(bench.amplitude_index()),
    );
    if let Some(last) = res.history.last() {
        manifest.set_result("e_a", last.e_a);
        manifest.set_result(
            "e_r",
            if last.e_r.is_nan() {
                Value::Null
            } else {
                Value::from(last.e_r)
            },
        );
    }
    let history = res
        .history
        .iter()
        .map(|rec| {
            vec![
                rec.iteration.to_string(),
                output::fmt(rec.e_a),
                output::fmt(rec.e_r),
                output::fmt(rec.omega),
            ]
        })
        .collect();
    Ok(Solved {
        trajectory: res.trajectory,
        history,
        converged: res.converged,
    })
}

fn solve_hbm(
    args: &SolveArgs,
    bench: &Benchmark,
    omega: f64,
    guess: &PeriodicTrajectory,
    manifest: &mut RunManifest,
) -> Result<Solved, Error> {
    let h = args.harmonics.expect("checked by run");
    let coeffs = FourierSolution::from_trajectory(guess, h);
    let run = hbm_solve_traced(bench.system(), h, omega, &coeffs, &HbmConfig::default())?;
    manifest.set_result("iterations", run.iterations as u64);
    manifest.set_result("omega", omega);
    let trajectory = run.solution.sample_grid(args.np)?;
    manifest.set_result(
        "amplitude",
        trajectory.component_amplitude(bench.amplitude_index()),
    );
    // No per-iteration trail to report: harmonic balance iterates on
    // coefficients, not grid states.
    Ok(Solved {
        trajectory,
        history: Vec::new(),
        converged: true,
    })
}

fn solve_shooting(
    args: &SolveArgs,
    bench: &Benchmark,
    omega: f64,
    guess: &PeriodicTrajectory,
    manifest: &mut RunManifest,
) -> Result<Solved, Error> {
    let sys = bench.system();
    // Newton on the period map has a small basin; near resonance the crude
    // initial guess can sit far from the orbit. A cheap grid solve first
    // gets the start point close, falling back to the raw guess when it
    // cannot converge itself.
    let phase = if sys.autonomous() {
        PhaseSpec::Autonomous
    } else {
        PhaseSpec::Forced
    };
    let seed_cfg = PfimConfig {
        tol_a: 1e-8,
        tol_r: 1e-4,
        max_iter: 20,
        ..PfimConfig::default()
    };
    let (x0, period_guess) = match pfim_solve(sys, guess.clone(), &phase, &seed_cfg) {
        Ok(res) if res.converged => (
            res.trajectory.sample(0).clone_owned(),
            TAU / res.trajectory.omega(),
        ),
        _ => (guess.sample(0).clone_owned(), TAU / omega),
    };
    let cfg = ShootingConfig::default();
    let sol = shooting_solve(sys, &x0, period_guess, &cfg)?;
    manifest.set_result("omega", sol.omega());
    manifest.set_result("period", sol.period);
    manifest.set_config("n_s", cfg.n_s as u64);
    let trajectory = sol.sample_grid(sys, args.np, cfg.n_s)?;
    manifest.set_result(
        "amplitude",
        trajectory.component_amplitude(bench.amplitude_index()),
    );
    Ok(Solved {
        trajectory,
        history: Vec::new(),
        converged: true,
    })
}
