//! The fixed-point iteration on candidate periodic trajectories.
//!
//! Each pass linearizes the residual R = f(x, tau) - omega x' about the
//! current trajectory, which turns the correction into a linear periodic
//! boundary value problem
//!
//!   mu' = Q(tau) mu + P(tau) + F(tau) nu
//!
//! with Q = J/omega, P = R/omega, F = -x'/omega and nu the frequency
//! correction. The problem is solved with piecewise-constant operators:
//! every grid interval gets an exact propagator from the matrix exponential
//! of its averaged coefficient, the propagators are composed over the
//! period, and the periodicity condition plus one scalar phase condition
//! close the system for (mu(0), nu). The correction is then swept forward
//! through the intervals and applied to every node at once.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::system::{
    average_error, grid_derivative, relative_update, residual_with_derivative,
    PeriodicTrajectory, SystemModel,
};

/// Forward recursion must return to its starting point; beyond this the
/// composition is too ill-conditioned to trust.
pub const PROPAGATION_CLOSURE_TOL: f64 = 1e-6;

/// Below this norm the trajectory derivative at tau = 0 cannot anchor the
/// autonomous phase condition.
pub const PHASE_DERIVATIVE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PfimConfig {
    /// Stop when the norm of the node-averaged residual drops below this.
    pub tol_a: f64,
    /// Stop when the mean relative correction drops below this.
    pub tol_r: f64,
    pub max_iter: usize,
    /// Abort when the residual has grown by this factor over its running
    /// minimum; the iteration left the convergence basin.
    pub divergence_factor: f64,
    pub record_history: bool,
    /// Keep a clone of the trajectory after every correction (and the
    /// guess); used by the convergence studies, off by default because of
    /// the memory cost.
    pub record_iterates: bool,
}

impl Default for PfimConfig {
    fn default() -> Self {
        Self {
            tol_a: 1e-10,
            tol_r: 1e-12,
            max_iter: 50,
            divergence_factor: 1e6,
            record_history: true,
            record_iterates: false,
        }
    }
}

impl PfimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol_a > 0.0 && self.tol_r > 0.0) {
            return Err(Error::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::InvalidParameter(
                "divergence factor must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// How the scalar phase condition closing the boundary system is chosen.
#[derive(Debug, Clone)]
pub enum PhaseSpec {
    /// Externally forced: the frequency is the excitation frequency, so the
    /// condition is simply nu = 0 and omega never moves.
    Forced,
    /// Self-excited: corrections at tau = 0 are kept orthogonal to the
    /// orbit direction, re-anchored every pass.
    Autonomous,
    /// Pseudo-arclength corrector step against a fixed base point and
    /// tangent.
    Continuation(ContinuationPhase),
}

/// Data for the arclength constraint
/// <x(0) - base_x0, t_x> + (omega - base_omega) t_omega = ds.
#[derive(Debug, Clone)]
pub struct ContinuationPhase {
    pub base_x0: DVector<f64>,
    pub base_omega: f64,
    pub tangent_x0: DVector<f64>,
    pub tangent_omega: f64,
    pub ds: f64,
}

/// One row appended to the periodicity system: upsilon * [mu(0); nu] = xi.
#[derive(Debug, Clone)]
pub struct PhaseCondition {
    pub upsilon: DVector<f64>,
    pub xi: f64,
}

pub fn phase_forced(dim: usize) -> PhaseCondition {
    let mut upsilon = DVector::zeros(dim + 1);
    upsilon[dim] = 1.0;
    PhaseCondition { upsilon, xi: 0.0 }
}

pub fn phase_autonomous(traj: &PeriodicTrajectory) -> Result<PhaseCondition> {
    let n = traj.n_p();
    let s = traj.samples();
    // derivative at node 0 only, same wraparound stencil the residual uses
    let d0 = (-&s[2] + &s[1] * 8.0 - &s[n - 1] * 8.0 + &s[n - 2]) / (12.0 * traj.dtau());
    phase_from_derivative(&d0)
}

fn phase_from_derivative(d0: &DVector<f64>) -> Result<PhaseCondition> {
    let norm = d0.norm();
    if norm < PHASE_DERIVATIVE_FLOOR {
        return Err(Error::DegeneratePhase { norm });
    }
    let dim = d0.len();
    let mut upsilon = DVector::zeros(dim + 1);
    upsilon.rows_mut(0, dim).copy_from(d0);
    Ok(PhaseCondition { upsilon, xi: 0.0 })
}

pub fn phase_continuation(traj: &PeriodicTrajectory, cp: &ContinuationPhase) -> PhaseCondition {
    let dim = traj.dim();
    let mut upsilon = DVector::zeros(dim + 1);
    upsilon.rows_mut(0, dim).copy_from(&cp.tangent_x0);
    upsilon[dim] = cp.tangent_omega;
    // linearized arclength constraint about the current iterate
    let drift = (traj.sample(0) - &cp.base_x0).dot(&cp.tangent_x0)
        + (traj.omega() - cp.base_omega) * cp.tangent_omega;
    PhaseCondition {
        upsilon,
        xi: cp.ds - drift,
    }
}

/// Node-wise coefficients of the linearized correction equation.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub q: Vec<DMatrix<f64>>,
    pub p: Vec<DVector<f64>>,
    pub f: Vec<DVector<f64>>,
}

pub fn build_linearization(sys: &SystemModel, traj: &PeriodicTrajectory) -> Result<Linearization> {
    let deriv = grid_derivative(traj);
    let res = residual_with_derivative(sys, traj, &deriv);
    Ok(linearize(sys, traj, &deriv, &res))
}

fn linearize(
    sys: &SystemModel,
    traj: &PeriodicTrajectory,
    deriv: &[DVector<f64>],
    res: &[DVector<f64>],
) -> Linearization {
    let omega = traj.omega();
    let n = traj.n_p();
    let mut q = Vec::with_capacity(n + 1);
    let mut p = Vec::with_capacity(n + 1);
    let mut f = Vec::with_capacity(n + 1);
    for i in 0..=n {
        q.push(sys.jacobian(traj.sample(i), traj.tau(i), omega) / omega);
        p.push(&res[i] / omega);
        f.push(-&deriv[i] / omega);
    }
    Linearization { q, p, f }
}

/// Exact propagators of the piecewise-constant problem, per interval and
/// composed over the full period.
#[derive(Debug, Clone)]
pub struct IntervalOperators {
    pub phi: Vec<DMatrix<f64>>,
    pub gamma: Vec<DVector<f64>>,
    pub pi: Vec<DVector<f64>>,
    pub phi_total: DMatrix<f64>,
    pub gamma_total: DVector<f64>,
    pub pi_total: DVector<f64>,
}

pub fn build_interval_operators(lin: &Linearization, dtau: f64) -> Result<IntervalOperators> {
    let n = lin.q.len() - 1;
    let dim = lin.q[0].nrows();
    let mut phi = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let mut pi = Vec::with_capacity(n);
    let mut phi_total = DMatrix::identity(dim, dim);
    let mut gamma_total = DVector::zeros(dim);
    let mut pi_total = DVector::zeros(dim);

    for i in 0..n {
        let q_avg = (&lin.q[i] + &lin.q[i + 1]) * 0.5;
        let p_avg = (&lin.p[i] + &lin.p[i + 1]) * 0.5;
        let f_avg = (&lin.f[i] + &lin.f[i + 1]) * 0.5;

        let (phi_i, psi_i) = linalg::exp_and_phi1(&q_avg, dtau)?;
        let gamma_i = &psi_i * p_avg;
        let pi_i = &psi_i * f_avg;

        phi_total = &phi_i * phi_total;
        gamma_total = &phi_i * gamma_total + &gamma_i;
        pi_total = &phi_i * pi_total + &pi_i;

        phi.push(phi_i);
        gamma.push(gamma_i);
        pi.push(pi_i);
    }

    Ok(IntervalOperators {
        phi,
        gamma,
        pi,
        phi_total,
        gamma_total,
        pi_total,
    })
}

/// Solves the bordered periodicity system for the initial correction and
/// the frequency correction.
pub fn solve_boundary(ops: &IntervalOperators, pc: &PhaseCondition) -> Result<(DVector<f64>, f64)> {
    let dim = ops.phi_total.nrows();
    assert_eq!(pc.upsilon.len(), dim + 1, "phase row length mismatch");

    let mut a = DMatrix::zeros(dim + 1, dim + 1);
    let eye = DMatrix::<f64>::identity(dim, dim);
    a.view_mut((0, 0), (dim, dim)).copy_from(&(&eye - &ops.phi_total));
    for i in 0..dim {
        a[(i, dim)] = -ops.pi_total[i];
    }
    for j in 0..=dim {
        a[(dim, j)] = pc.upsilon[j];
    }

    let mut b = DVector::zeros(dim + 1);
    b.rows_mut(0, dim).copy_from(&ops.gamma_total);
    b[dim] = pc.xi;

    let sol = linalg::solve_dense(&a, &b)?;
    Ok((sol.rows(0, dim).into(), sol[dim]))
}

/// Sweeps the correction through the intervals. The result must close the
/// period; the duplicated node is then pinned to node 0.
pub fn propagate_correction(
    ops: &IntervalOperators,
    mu0: &DVector<f64>,
    nu: f64,
) -> Result<Vec<DVector<f64>>> {
    let n = ops.phi.len();
    let mut mu = Vec::with_capacity(n + 1);
    mu.push(mu0.clone());
    for i in 0..n {
        let next = &ops.phi[i] * &mu[i] + &ops.gamma[i] + &ops.pi[i] * nu;
        mu.push(next);
    }
    let mismatch = (&mu[n] - mu0).norm();
    let tol = PROPAGATION_CLOSURE_TOL * (1.0 + mu0.norm());
    if !(mismatch <= tol) {
        return Err(Error::PropagationMismatch { mismatch, tol });
    }
    mu[n] = mu0.clone();
    Ok(mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Node-averaged residual under tol_a.
    ResidualTolerance,
    /// Mean relative correction under tol_r.
    UpdateTolerance,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub e_a: f64,
    /// NaN for the guess entry, where no correction exists yet.
    pub e_r: f64,
    pub omega: f64,
}

#[derive(Debug)]
pub struct PfimResult {
    pub trajectory: PeriodicTrajectory,
    /// Number of corrections applied.
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Entry 0 describes the guess; entry k the state after correction k.
    pub history: Vec<IterationRecord>,
    /// Populated only with `record_iterates`; same indexing as history.
    pub iterates: Vec<PeriodicTrajectory>,
    /// Rebuilt at the final trajectory so the composed propagator is the
    /// monodromy of the solution, ready for stability analysis. None when
    /// the final iterate is too broken to linearize.
    pub final_operators: Option<IntervalOperators>,
}

pub fn pfim_solve(
    sys: &SystemModel,
    guess: PeriodicTrajectory,
    phase: &PhaseSpec,
    cfg: &PfimConfig,
) -> Result<PfimResult> {
    cfg.validate()?;
    if sys.dim() != guess.dim() {
        return Err(Error::DimensionMismatch(format!(
            "system dimension {} vs guess dimension {}",
            sys.dim(),
            guess.dim()
        )));
    }

    let mut traj = guess;
    let dtau = traj.dtau();
    let mut history = Vec::new();
    let mut iterates = Vec::new();
    let mut min_e_a = f64::INFINITY;
    let mut iterations = 0usize;
    let stop_reason;

    if cfg.record_iterates {
        iterates.push(traj.clone());
    }

    let mut deriv = grid_derivative(&traj);
    let mut res = residual_with_derivative(sys, &traj, &deriv);
    let mut e_a = average_error(&res);
    if cfg.record_history {
        history.push(IterationRecord {
            iteration: 0,
            e_a,
            e_r: f64::NAN,
            omega: traj.omega(),
        });
    }

    // The guess is never accepted as converged: on symmetric guesses the
    // signed node average can cancel to round-off while the pointwise
    // residual is huge, so only post-correction residuals are trusted, and
    // the divergence guard likewise measures growth against corrected
    // passes only.
    loop {
        if !e_a.is_finite() {
            stop_reason = StopReason::Diverged;
            break;
        }
        if iterations == cfg.max_iter {
            stop_reason = StopReason::MaxIterations;
            break;
        }

        let lin = linearize(sys, &traj, &deriv, &res);
        let ops = build_interval_operators(&lin, dtau)?;
        let pc = match phase {
            PhaseSpec::Forced => phase_forced(sys.dim()),
            PhaseSpec::Autonomous => phase_from_derivative(&deriv[0])?,
            PhaseSpec::Continuation(cp) => phase_continuation(&traj, cp),
        };
        let (mu0, nu) = solve_boundary(&ops, &pc).map_err(|e| match e {
            Error::Singular { pivot_index } => Error::SingularBoundary {
                iteration: iterations + 1,
                pivot_index,
            },
            other => other,
        })?;
        let delta = propagate_correction(&ops, &mu0, nu)?;

        traj.apply_correction(&delta);
        if !matches!(phase, PhaseSpec::Forced) {
            let omega_new = traj.omega() + nu;
            traj.set_omega(omega_new)?;
        }
        iterations += 1;
        if cfg.record_iterates {
            iterates.push(traj.clone());
        }

        deriv = grid_derivative(&traj);
        res = residual_with_derivative(sys, &traj, &deriv);
        e_a = average_error(&res);
        let e_r = relative_update(&traj, &delta);
        if cfg.record_history {
            history.push(IterationRecord {
                iteration: iterations,
                e_a,
                e_r,
                omega: traj.omega(),
            });
        }

        if e_a < cfg.tol_a {
            stop_reason = StopReason::ResidualTolerance;
            break;
        }
        // the relative measure needs a previous correction to compare
        // against, so it only arms from the second pass
        if iterations >= 2 && e_r < cfg.tol_r {
            stop_reason = StopReason::UpdateTolerance;
            break;
        }
        if e_a.is_finite() && min_e_a > 0.0 && e_a > cfg.divergence_factor * min_e_a {
            stop_reason = StopReason::Diverged;
            break;
        }
        min_e_a = min_e_a.min(e_a);
    }

    let converged = matches!(
        stop_reason,
        StopReason::ResidualTolerance | StopReason::UpdateTolerance
    );

    // fresh operators about the final trajectory: their composition is the
    // monodromy matrix of the solution itself, not of the previous iterate
    let final_operators = if history.last().map(|h| h.e_a.is_finite()).unwrap_or(true) {
        build_linearization(sys, &traj)
            .and_then(|lin| build_interval_operators(&lin, dtau))
            .ok()
    } else {
        None
    };

    Ok(PfimResult {
        trajectory: traj,
        iterations,
        converged,
        stop_reason,
        history,
        iterates,
        final_operators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn resonant_oscillator() -> SystemModel {
        // x'' + 0.05 x' + x = 0.2 cos(t), steady state 4 sin(t)
        SystemModel::new(
            "resonant",
            2,
            false,
            |x, tau, _| DVector::from_vec(vec![x[1], 0.2 * tau.cos() - 0.05 * x[1] - x[0]]),
            |_, _, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.05]),
        )
    }

    fn constant_lin(n_p: usize, q: f64, p: f64, f: f64) -> Linearization {
        Linearization {
            q: vec![DMatrix::from_element(1, 1, q); n_p + 1],
            p: vec![DVector::from_element(1, p); n_p + 1],
            f: vec![DVector::from_element(1, f); n_p + 1],
        }
    }

    #[test]
    fn linearization_of_linear_system_has_constant_q() {
        let sys = resonant_oscillator();
        let traj = PeriodicTrajectory::from_fn(2.0, 32, |tau| {
            DVector::from_vec(vec![tau.sin(), tau.cos()])
        })
        .unwrap();
        let lin = build_linearization(&sys, &traj).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.05]) / 2.0;
        for q in &lin.q {
            assert_relative_eq!(q, &expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn linearization_vanishes_on_exact_solution_and_constant_traj() {
        let sys = resonant_oscillator();
        let exact = PeriodicTrajectory::from_fn(1.0, 1024, |tau| {
            DVector::from_vec(vec![4.0 * tau.sin(), 4.0 * tau.cos()])
        })
        .unwrap();
        let lin = build_linearization(&sys, &exact).unwrap();
        for p in &lin.p {
            assert!(p.norm() < 1e-6);
        }

        let constant = PeriodicTrajectory::from_fn(1.0, 32, |_| {
            DVector::from_vec(vec![0.7, 0.0])
        })
        .unwrap();
        let lin = build_linearization(&sys, &constant).unwrap();
        for f in &lin.f {
            assert_relative_eq!(f.norm(), 0.0);
        }
    }

    #[test]
    fn operators_reduce_to_quadrature_for_zero_q() {
        let n_p = 64;
        let lin = constant_lin(n_p, 0.0, 0.3, 0.0);
        let ops = build_interval_operators(&lin, TAU / n_p as f64).unwrap();
        assert_relative_eq!(ops.phi_total[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ops.gamma_total[0], TAU * 0.3, epsilon = 1e-10);
        assert_relative_eq!(ops.pi_total[0], 0.0);
    }

    #[test]
    fn operators_are_exact_for_constant_coefficients() {
        let n_p = 32;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.1]);
        let lin = Linearization {
            q: vec![a.clone(); n_p + 1],
            p: vec![DVector::zeros(2); n_p + 1],
            f: vec![DVector::zeros(2); n_p + 1],
        };
        let ops = build_interval_operators(&lin, TAU / n_p as f64).unwrap();
        let direct = linalg::mat_exp(&(a * TAU), linalg::EXP_TAYLOR_TERMS).unwrap();
        let dev = (&ops.phi_total - &direct).norm() / direct.norm();
        assert!(dev < 1e-11, "relative deviation {dev}");
    }

    #[test]
    fn scalar_time_varying_coefficient_converges_to_exact_propagator() {
        // q(tau) = cos(tau): scalar case commutes, so the exact propagator
        // over the period is exp(integral of cos) = 1
        let n_p = 256;
        let lin = Linearization {
            q: (0..=n_p)
                .map(|i| DMatrix::from_element(1, 1, (TAU * i as f64 / n_p as f64).cos()))
                .collect(),
            p: vec![DVector::zeros(1); n_p + 1],
            f: vec![DVector::zeros(1); n_p + 1],
        };
        let ops = build_interval_operators(&lin, TAU / n_p as f64).unwrap();
        assert!((ops.phi_total[(0, 0)] - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn composite_matches_direct_product() {
        let sys = resonant_oscillator();
        let traj = PeriodicTrajectory::from_fn(1.0, 64, |tau| {
            DVector::from_vec(vec![tau.sin(), tau.cos()])
        })
        .unwrap();
        let lin = build_linearization(&sys, &traj).unwrap();
        let ops = build_interval_operators(&lin, traj.dtau()).unwrap();
        let mut product = DMatrix::identity(2, 2);
        for phi in &ops.phi {
            product = phi * product;
        }
        let dev = (&product - &ops.phi_total).norm() / product.norm();
        assert!(dev < 1e-11);
    }

    #[test]
    fn forced_phase_shape_and_exact_nu() {
        let pc = phase_forced(2);
        assert_eq!(pc.upsilon.as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(pc.xi, 0.0);

        let ops = IntervalOperators {
            phi: vec![],
            gamma: vec![],
            pi: vec![],
            phi_total: DMatrix::from_element(1, 1, 0.5),
            gamma_total: DVector::from_element(1, 1.0),
            pi_total: DVector::from_element(1, 0.7),
        };
        let (mu0, nu) = solve_boundary(&ops, &phase_forced(1)).unwrap();
        assert_relative_eq!(mu0[0], 2.0, epsilon = 1e-14);
        assert_eq!(nu, 0.0);
    }

    #[test]
    fn homogeneous_boundary_yields_zero() {
        let ops = IntervalOperators {
            phi: vec![],
            gamma: vec![],
            pi: vec![],
            phi_total: DMatrix::from_element(1, 1, 0.5),
            gamma_total: DVector::zeros(1),
            pi_total: DVector::zeros(1),
        };
        let (mu0, nu) = solve_boundary(&ops, &phase_forced(1)).unwrap();
        assert_eq!(mu0[0], 0.0);
        assert_eq!(nu, 0.0);
    }

    #[test]
    fn identity_monodromy_with_forcing_is_singular() {
        let ops = IntervalOperators {
            phi: vec![],
            gamma: vec![],
            pi: vec![],
            phi_total: DMatrix::identity(1, 1),
            gamma_total: DVector::from_element(1, 0.3),
            pi_total: DVector::zeros(1),
        };
        assert!(matches!(
            solve_boundary(&ops, &phase_forced(1)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn autonomous_phase_from_cosine_orbit() {
        let traj = PeriodicTrajectory::from_fn(1.0, 64, |tau| {
            DVector::from_vec(vec![tau.cos(), -tau.sin()])
        })
        .unwrap();
        let pc = phase_autonomous(&traj).unwrap();
        assert_relative_eq!(pc.upsilon[0], 0.0, epsilon = 1e-5);
        assert_relative_eq!(pc.upsilon[1], -1.0, epsilon = 1e-5);
        assert_eq!(pc.upsilon[2], 0.0);

        let constant =
            PeriodicTrajectory::from_fn(1.0, 64, |_| DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(matches!(
            phase_autonomous(&constant),
            Err(Error::DegeneratePhase { .. })
        ));
    }

    #[test]
    fn propagation_telescopes_and_checks_closure() {
        let n_p = 8;
        let c = 1e-9;
        let ops = build_interval_operators(&constant_lin(n_p, 0.0, 0.0, 0.0), TAU / 8.0).unwrap();
        let mut ops = ops;
        for g in ops.gamma.iter_mut() {
            g[0] = c;
        }
        let mu = propagate_correction(&ops, &DVector::zeros(1), 0.0).unwrap();
        for (i, m) in mu.iter().enumerate().take(n_p) {
            assert_relative_eq!(m[0], i as f64 * c, epsilon = 1e-22);
        }
        assert_eq!(mu[n_p][0], 0.0); // re-pinned to node 0

        for g in ops.gamma.iter_mut() {
            g[0] = 0.5; // drifts 4.0 over the period: closure must fail
        }
        assert!(matches!(
            propagate_correction(&ops, &DVector::zeros(1), 0.0),
            Err(Error::PropagationMismatch { .. })
        ));
    }

    #[test]
    fn zero_correction_propagates_to_zero() {
        let ops = build_interval_operators(&constant_lin(8, -0.3, 0.0, 0.0), TAU / 8.0).unwrap();
        let mu = propagate_correction(&ops, &DVector::zeros(1), 0.0).unwrap();
        assert!(mu.iter().all(|m| m[0] == 0.0));
    }

    #[test]
    fn linear_resonance_solved_to_analytic_amplitude() {
        let sys = resonant_oscillator();
        let guess = PeriodicTrajectory::zeros(1.0, 1 << 10, 2).unwrap();
        let out = pfim_solve(&sys, guess, &PhaseSpec::Forced, &PfimConfig::default()).unwrap();

        assert!(out.converged, "stop reason {:?}", out.stop_reason);
        assert!(out.iterations <= 3, "took {} iterations", out.iterations);
        // the discretized linear problem is solved in the very first pass up
        // to the quadrature mismatch between the interval operators and the
        // grid differentiation, so the first residual is already tiny and
        // the amplitude lands within a few parts in 1e6 of F/(c*omega) = 4
        assert!(
            out.history[1].e_a <= 1e-8,
            "first-pass residual {}",
            out.history[1].e_a
        );
        let amplitude = out.trajectory.component_amplitude(0);
        assert_relative_eq!(amplitude, 4.0, epsilon = 1e-6);
        assert_eq!(out.history[0].omega, 1.0);
        assert!(out.history[0].e_r.is_nan());
    }

    #[test]
    fn converged_solution_is_a_fixed_point() {
        let sys = resonant_oscillator();
        let guess = PeriodicTrajectory::zeros(1.0, 1 << 10, 2).unwrap();
        let out = pfim_solve(&sys, guess, &PhaseSpec::Forced, &PfimConfig::default()).unwrap();
        let again = pfim_solve(
            &sys,
            out.trajectory.clone(),
            &PhaseSpec::Forced,
            &PfimConfig::default(),
        )
        .unwrap();
        assert!(again.converged);
        assert_eq!(again.iterations, 1, "restart should stop after one pass");
        // and that pass must barely move the trajectory
        let moved: f64 = (0..=out.trajectory.n_p())
            .map(|i| (again.trajectory.sample(i) - out.trajectory.sample(i)).norm())
            .fold(0.0, f64::max);
        assert!(moved < 1e-9, "restart moved the solution by {moved}");
    }

    #[test]
    fn vanderpol_converges_with_frequency_update() {
        let b = crate::benchmarks::Benchmark::build("vanderpol", &Default::default()).unwrap();
        let guess = b.initial_guess(1.0, 1 << 9).unwrap();
        let out = pfim_solve(b.system(), guess, &PhaseSpec::Autonomous, &PfimConfig::default())
            .unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 12, "took {}", out.iterations);
        // limit cycle amplitude is near 2, frequency drops below 1
        let amp = out.trajectory.component_amplitude(0);
        assert!((1.9..2.1).contains(&amp), "amplitude {amp}");
        assert!(out.trajectory.omega() < 1.0 && out.trajectory.omega() > 0.85);
        // forced-style history bookkeeping: omega recorded per pass
        assert_relative_eq!(
            out.history.last().unwrap().omega,
            out.trajectory.omega()
        );
        assert!(out.final_operators.is_some());
    }

    #[test]
    fn forced_solve_never_moves_omega() {
        let b = crate::benchmarks::Benchmark::build("duffing", &Default::default()).unwrap();
        let guess = b.initial_guess(1.2, 256).unwrap();
        let out = pfim_solve(b.system(), guess, &PhaseSpec::Forced, &PfimConfig::default())
            .unwrap();
        assert!(out.converged);
        for rec in &out.history {
            assert_eq!(rec.omega, 1.2);
        }
    }

    #[test]
    fn divergence_guard_trips_on_bad_basin() {
        // drive the oscillator hard with an absurd guess far outside any
        // basin: tiny tolerance keeps it iterating until the guard trips
        let sys = SystemModel::new(
            "runaway",
            1,
            false,
            |x, _, _| DVector::from_vec(vec![x[0] * x[0] - 1e4]),
            |x, _, _| DMatrix::from_element(1, 1, 2.0 * x[0]),
        );
        let guess = PeriodicTrajectory::from_fn(1.0, 32, |tau| {
            DVector::from_element(1, 200.0 + tau.sin())
        })
        .unwrap();
        let cfg = PfimConfig {
            tol_a: 1e-300,
            ..Default::default()
        };
        let out = pfim_solve(&sys, guess, &PhaseSpec::Forced, &cfg);
        match out {
            Ok(r) => assert!(!r.converged),
            Err(_) => {} // kernel rejection of a non-finite iterate also counts
        }
    }
}
