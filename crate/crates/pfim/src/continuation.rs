//! Pseudo-arclength continuation of periodic solutions over the excitation
//! frequency, with stability read off the Floquet multipliers of each
//! converged point.
//!
//! Both the initial state and the frequency are treated as functions of an
//! arclength parameter. Each step predicts along the secant tangent,
//! corrects with the solver under the arclength constraint, and adapts the
//! step to the corrector's appetite. Folds are regular points of the
//! arclength parametrization, so the sweep walks around them where a naive
//! frequency sweep would jump branches.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::{
    pfim_solve, ContinuationPhase, IntervalOperators, PfimConfig, PhaseSpec,
};
use crate::system::{PeriodicTrajectory, SystemModel};

/// Tolerance band around the unit circle when classifying multipliers.
pub const STABILITY_MARGIN: f64 = 1e-6;

/// How close to +1 the trivial multiplier of an autonomous orbit must be
/// before it is recognized and excluded from the stability check.
pub const TRIVIAL_MULTIPLIER_TOL: f64 = 1e-4;

/// Floquet multipliers of a converged solution: eigenvalues of the composed
/// propagator. The monodromy over scaled time [0, 2pi] equals the monodromy
/// over one physical period.
pub fn floquet(ops: &IntervalOperators) -> Result<Vec<Complex64>> {
    linalg::eigenvalues(&ops.phi_total)
}

/// An orbit is stable when every multiplier sits inside the unit circle up
/// to round-off. Autonomous orbits always carry one trivial multiplier at
/// +1 (phase shift along the orbit), which is excluded.
pub fn classify_stability(multipliers: &[Complex64], autonomous: bool) -> bool {
    let mut excluded = usize::MAX;
    if autonomous {
        let mut best = (TRIVIAL_MULTIPLIER_TOL, usize::MAX);
        for (i, l) in multipliers.iter().enumerate() {
            let d = (l - Complex64::new(1.0, 0.0)).norm();
            if d < best.0 {
                best = (d, i);
            }
        }
        excluded = best.1;
    }
    multipliers
        .iter()
        .enumerate()
        .all(|(i, l)| i == excluded || l.norm() <= 1.0 + STABILITY_MARGIN)
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    /// State at tau = 0.
    pub x0: DVector<f64>,
    pub omega: f64,
    /// Max over the grid of the reported displacement component.
    pub amplitude: f64,
    pub multipliers: Vec<Complex64>,
    pub stable: bool,
    /// Unit (dx0/ds, domega/ds) secant used to predict the NEXT point.
    pub tangent: DVector<f64>,
    /// Corrector iterations this point cost.
    pub iterations: usize,
    /// Arclength step that led here (0 for the first seed).
    pub ds: f64,
}

impl BranchPoint {
    pub fn max_multiplier_abs(&self) -> f64 {
        self.multipliers
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationConfig {
    pub omega_start: f64,
    pub omega_end: f64,
    /// Initial arclength step.
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub n_p: usize,
    pub pfim: PfimConfig,
}

impl ContinuationConfig {
    pub fn new(omega_start: f64, omega_end: f64) -> Self {
        Self {
            omega_start,
            omega_end,
            ds: 0.02,
            ds_min: 1e-4,
            ds_max: 0.1,
            max_points: 2000,
            n_p: 1 << 9,
            pfim: PfimConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.omega_start == self.omega_end {
            return Err(Error::InvalidParameter(
                "sweep needs distinct start and end frequencies".into(),
            ));
        }
        if !(self.ds_min <= self.ds && self.ds <= self.ds_max && self.ds_min > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step bounds must satisfy 0 < ds_min <= ds <= ds_max, got {} / {} / {}",
                self.ds_min, self.ds, self.ds_max
            )));
        }
        if self.max_points < 2 {
            return Err(Error::InvalidParameter(
                "a sweep needs at least two points".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchOutcome {
    /// Frequency left the sweep window.
    CompletedSweep,
    MaxPoints,
    /// Corrector kept failing at the minimum step; the partial branch is
    /// still returned.
    Stalled { omega: f64 },
}

#[derive(Debug)]
pub struct BranchResult {
    pub points: Vec<BranchPoint>,
    pub outcome: BranchOutcome,
}

struct AcceptedPoint {
    trajectory: PeriodicTrajectory,
    iterations: usize,
    operators: IntervalOperators,
}

fn solve_point(
    sys: &SystemModel,
    guess: PeriodicTrajectory,
    phase: &PhaseSpec,
    cfg: &PfimConfig,
) -> Result<AcceptedPoint> {
    let out = pfim_solve(sys, guess, phase, cfg)?;
    if !out.converged {
        let last = out.history.last();
        return Err(Error::NoConvergence {
            iterations: out.iterations,
            e_a: last.map(|h| h.e_a).unwrap_or(f64::NAN),
        });
    }
    let operators = out.final_operators.ok_or(Error::NoConvergence {
        iterations: out.iterations,
        e_a: f64::NAN,
    })?;
    Ok(AcceptedPoint {
        trajectory: out.trajectory,
        iterations: out.iterations,
        operators,
    })
}

fn make_point(
    accepted: &AcceptedPoint,
    amplitude_index: usize,
    tangent: DVector<f64>,
    ds: f64,
) -> Result<BranchPoint> {
    let multipliers = floquet(&accepted.operators)?;
    let stable = classify_stability(&multipliers, false);
    Ok(BranchPoint {
        x0: accepted.trajectory.sample(0).clone(),
        omega: accepted.trajectory.omega(),
        amplitude: accepted.trajectory.component_amplitude(amplitude_index),
        multipliers,
        stable,
        tangent,
        iterations: accepted.iterations,
        ds,
    })
}

/// Unit secant between two consecutive solutions in (x0, omega) space.
fn secant_tangent(
    prev: &PeriodicTrajectory,
    cur: &PeriodicTrajectory,
    align_with: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let dim = cur.dim();
    let mut t = DVector::zeros(dim + 1);
    t.rows_mut(0, dim)
        .copy_from(&(cur.sample(0) - prev.sample(0)));
    t[dim] = cur.omega() - prev.omega();
    let norm = t.norm();
    if norm < 1e-14 {
        return Err(Error::InvalidParameter(
            "consecutive branch points coincide, no tangent direction".into(),
        ));
    }
    t /= norm;
    if let Some(old) = align_with {
        if t.dot(old) < 0.0 {
            t = -t;
        }
    }
    Ok(t)
}

/// Extrapolates the full trajectory along the secant so the corrector
/// starts close to the branch, with the initial state landing exactly at
/// x0 + t_x * ds.
fn predict_trajectory(
    prev: &PeriodicTrajectory,
    cur: &PeriodicTrajectory,
    tangent: &DVector<f64>,
    ds: f64,
) -> Result<PeriodicTrajectory> {
    let dim = cur.dim();
    let mut secant_norm2 = (cur.omega() - prev.omega()).powi(2);
    secant_norm2 += (cur.sample(0) - prev.sample(0)).norm_squared();
    let sigma = ds / secant_norm2.sqrt();
    let samples: Vec<DVector<f64>> = (0..=cur.n_p())
        .map(|i| {
            let d = cur.sample(i) - prev.sample(i);
            cur.sample(i) + d * sigma
        })
        .collect();
    let omega = cur.omega() + tangent[dim] * ds;
    PeriodicTrajectory::new(omega, samples)
}

/// Sweeps a branch of forced periodic solutions from omega_start toward
/// omega_end. The caller supplies the trajectory guess for the very first
/// point; every later point is seeded from the branch itself.
pub fn continue_branch(
    sys: &SystemModel,
    seed_guess: PeriodicTrajectory,
    amplitude_index: usize,
    cfg: &ContinuationConfig,
) -> Result<BranchResult> {
    cfg.validate()?;
    if sys.autonomous() {
        return Err(Error::InvalidParameter(
            "frequency continuation expects a forced system".into(),
        ));
    }
    let direction = (cfg.omega_end - cfg.omega_start).signum();
    let omega_lo = cfg.omega_start.min(cfg.omega_end);
    let omega_hi = cfg.omega_start.max(cfg.omega_end);

    // two natural-parameter seeds bootstrap the secant tangent
    let first = solve_point(
        sys,
        seed_guess.with_omega(cfg.omega_start)?,
        &PhaseSpec::Forced,
        &cfg.pfim,
    )?;
    let second_guess = first
        .trajectory
        .with_omega(cfg.omega_start + direction * cfg.ds)?;
    let second = solve_point(sys, second_guess, &PhaseSpec::Forced, &cfg.pfim)?;

    let tangent = secant_tangent(&first.trajectory, &second.trajectory, None)?;
    let mut points = vec![
        make_point(&first, amplitude_index, tangent.clone(), 0.0)?,
        make_point(&second, amplitude_index, tangent.clone(), cfg.ds)?,
    ];
    let mut prev = first.trajectory;
    let mut cur = second.trajectory;
    let mut ds = cfg.ds;

    let outcome = loop {
        let last = points.last().expect("seeded");
        if last.omega < omega_lo || last.omega > omega_hi {
            break BranchOutcome::CompletedSweep;
        }
        if points.len() >= cfg.max_points {
            break BranchOutcome::MaxPoints;
        }

        let tangent = &last.tangent;
        let dim = sys.dim();
        let attempt = predict_trajectory(&prev, &cur, tangent, ds).and_then(|guess| {
            let phase = PhaseSpec::Continuation(ContinuationPhase {
                base_x0: cur.sample(0).clone(),
                base_omega: cur.omega(),
                tangent_x0: tangent.rows(0, dim).into(),
                tangent_omega: tangent[dim],
                ds,
            });
            solve_point(sys, guess, &phase, &cfg.pfim)
        });

        match attempt {
            Ok(accepted) => {
                let t_new = secant_tangent(&cur, &accepted.trajectory, Some(tangent))?;
                points.push(make_point(&accepted, amplitude_index, t_new, ds)?);
                if accepted.iterations <= 3 {
                    ds = (ds * 1.25).min(cfg.ds_max);
                }
                prev = cur;
                cur = accepted.trajectory;
            }
            Err(_) if ds > cfg.ds_min * (1.0 + 1e-9) => {
                ds = (ds * 0.5).max(cfg.ds_min);
            }
            Err(_) => {
                break BranchOutcome::Stalled { omega: cur.omega() };
            }
        }
    };

    Ok(BranchResult { points, outcome })
}
