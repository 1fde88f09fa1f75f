//! Independent reference solvers the main iteration is checked against:
//! classical shooting (fixed-step RK4 plus Newton on the period map),
//! harmonic balance with alternating frequency-time evaluation, and a
//! brute-force settle-and-sample fallback for stable orbits. All three are
//! deliberately free of code shared with the solver module so agreement
//! between them means something.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::linalg;
use crate::system::{PeriodicTrajectory, SystemModel};

/// Classical fixed-step RK4 endpoint of the flow map. Time is physical;
/// the rhs sees the scaled phase omega*t, which is how the forced systems
/// recover their excitation.
pub fn rk4_flow(
    sys: &SystemModel,
    x0: &DVector<f64>,
    t0: f64,
    t_span: f64,
    n_s: usize,
    omega: f64,
) -> Result<DVector<f64>> {
    let samples = rk4_sample(sys, x0, t0, t_span, n_s, omega, n_s)?;
    Ok(samples.into_iter().next_back().expect("endpoint present"))
}

/// Same integration, keeping every `keep_every`-th state (plus the start),
/// so a single pass can both settle and sample.
pub fn rk4_sample(
    sys: &SystemModel,
    x0: &DVector<f64>,
    t0: f64,
    t_span: f64,
    n_s: usize,
    omega: f64,
    keep_every: usize,
) -> Result<Vec<DVector<f64>>> {
    if n_s == 0 || keep_every == 0 || n_s % keep_every != 0 {
        return Err(Error::InvalidParameter(format!(
            "step count {n_s} must be a positive multiple of keep_every {keep_every}"
        )));
    }
    let h = t_span / n_s as f64;
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(n_s / keep_every + 1);
    out.push(x.clone());
    for step in 0..n_s {
        let t = t0 + step as f64 * h;
        let k1 = sys.rhs(&x, omega * t, omega);
        let k2 = sys.rhs(&(&x + &k1 * (h / 2.0)), omega * (t + h / 2.0), omega);
        let k3 = sys.rhs(&(&x + &k2 * (h / 2.0)), omega * (t + h / 2.0), omega);
        let k4 = sys.rhs(&(&x + &k3 * h), omega * (t + h), omega);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                step,
                t: t + h,
            });
        }
        if (step + 1) % keep_every == 0 {
            out.push(x.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ShootingConfig {
    /// RK4 steps over one period.
    pub n_s: usize,
    /// Newton stops at this max-norm of the period-map residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            n_s: 1 << 14,
            tol: 1e-11,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShootingSolution {
    pub x0: DVector<f64>,
    pub period: f64,
    pub n_s: usize,
    /// Flow Jacobian over one period, from the variational equations along
    /// the converged orbit.
    pub monodromy: DMatrix<f64>,
}

impl ShootingSolution {
    pub fn omega(&self) -> f64 {
        TAU / self.period
    }

    /// Integrates the converged orbit onto a uniform grid of n_p intervals,
    /// duplicating the endpoint, for comparison against grid solutions.
    pub fn sample_grid(&self, sys: &SystemModel, n_p: usize, min_steps: usize) -> Result<PeriodicTrajectory> {
        let k = min_steps.div_ceil(n_p).max(1);
        let samples = rk4_sample(sys, &self.x0, 0.0, self.period, k * n_p, self.omega(), k)?;
        PeriodicTrajectory::new(self.omega(), samples)
    }
}

/// Endpoint of the flow together with the monodromy matrix, obtained by
/// integrating the variational system M' = J(x(t)) M alongside the state.
/// Piecewise-defined Jacobians are evaluated on whichever branch the state
/// occupies at each stage, so the result is the frozen-branch monodromy,
/// consistent with the interval-operator product of the main solver.
pub fn flow_with_monodromy(
    sys: &SystemModel,
    x0: &DVector<f64>,
    t0: f64,
    t_span: f64,
    n_s: usize,
    omega: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if n_s == 0 {
        return Err(Error::InvalidParameter(
            "step count must be positive".into(),
        ));
    }
    let dim = sys.dim();
    let h = t_span / n_s as f64;
    let mut x = x0.clone();
    let mut m = DMatrix::identity(dim, dim);
    for step in 0..n_s {
        let t = t0 + step as f64 * h;
        let k1 = sys.rhs(&x, omega * t, omega);
        let l1 = sys.jacobian(&x, omega * t, omega) * &m;
        let x2 = &x + &k1 * (h / 2.0);
        let k2 = sys.rhs(&x2, omega * (t + h / 2.0), omega);
        let l2 = sys.jacobian(&x2, omega * (t + h / 2.0), omega) * (&m + &l1 * (h / 2.0));
        let x3 = &x + &k2 * (h / 2.0);
        let k3 = sys.rhs(&x3, omega * (t + h / 2.0), omega);
        let l3 = sys.jacobian(&x3, omega * (t + h / 2.0), omega) * (&m + &l2 * (h / 2.0));
        let x4 = &x + &k3 * h;
        let k4 = sys.rhs(&x4, omega * (t + h), omega);
        let l4 = sys.jacobian(&x4, omega * (t + h), omega) * (&m + &l3 * h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        m += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                step,
                t: t + h,
            });
        }
    }
    Ok((x, m))
}

/// Newton on the period-map residual psi(x0, T) - x0. Forced systems keep
/// the period fixed; autonomous systems treat it as an extra unknown with
/// an orthogonality row pinning the phase. Steps are halved (up to five
/// times) whenever the full update fails to reduce the residual, which
/// keeps the iteration from tunnelling to a different orbit when seeded
/// close to one.
pub fn shooting_solve(
    sys: &SystemModel,
    guess_x0: &DVector<f64>,
    period_guess: f64,
    cfg: &ShootingConfig,
) -> Result<ShootingSolution> {
    if !(period_guess > 0.0 && period_guess.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "period guess must be positive, got {period_guess}"
        )));
    }
    let dim = sys.dim();
    let mut x0 = guess_x0.clone();
    let mut period = period_guess;
    let (mut end, mut m) = flow_with_monodromy(sys, &x0, 0.0, period, cfg.n_s, TAU / period)?;

    for iteration in 0..cfg.max_iter {
        let g = &end - &x0;
        let residual = g.amax();
        if residual <= cfg.tol {
            return Ok(ShootingSolution {
                x0,
                period,
                n_s: cfg.n_s,
                monodromy: m,
            });
        }

        let omega = TAU / period;
        let (delta_x, delta_t) = if sys.autonomous() {
            let f_end = sys.rhs(&end, 0.0, omega);
            let f_start = sys.rhs(&x0, 0.0, omega);
            let mut a = DMatrix::zeros(dim + 1, dim + 1);
            a.view_mut((0, 0), (dim, dim))
                .copy_from(&(&m - DMatrix::identity(dim, dim)));
            for i in 0..dim {
                a[(i, dim)] = f_end[i];
                a[(dim, i)] = f_start[i];
            }
            let mut rhs = DVector::zeros(dim + 1);
            rhs.rows_mut(0, dim).copy_from(&(-&g));
            let delta = linalg::solve_dense(&a, &rhs)?;
            (delta.rows(0, dim).clone_owned(), delta[dim])
        } else {
            let a = &m - DMatrix::identity(dim, dim);
            (linalg::solve_dense(&a, &(-&g))?, 0.0)
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=5 {
            let x_try = &x0 + &delta_x * scale;
            let t_try = period + delta_t * scale;
            if t_try > 0.0 {
                if let Ok(end_try) =
                    rk4_flow(sys, &x_try, 0.0, t_try, cfg.n_s, TAU / t_try)
                {
                    if (&end_try - &x_try).amax() < residual {
                        accepted = Some((x_try, t_try));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        let Some((x_new, t_new)) = accepted else {
            return Err(Error::NewtonStalled {
                iterations: iteration + 1,
                residual,
            });
        };
        x0 = x_new;
        period = t_new;
        (end, m) = flow_with_monodromy(sys, &x0, 0.0, period, cfg.n_s, TAU / period)?;
    }

    Err(Error::NewtonStalled {
        iterations: cfg.max_iter,
        residual: (&end - &x0).amax(),
    })
}

/// Truncated Fourier representation: per state a0, a1..aH, b1..bH.
#[derive(Debug, Clone)]
pub struct FourierSolution {
    pub h: usize,
    pub omega: f64,
    /// One row per state, 2h+1 columns.
    pub coeffs: DMatrix<f64>,
}

impl FourierSolution {
    pub fn zeros(dim: usize, h: usize, omega: f64) -> Self {
        Self {
            h,
            omega,
            coeffs: DMatrix::zeros(dim, 2 * h + 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn synthesize(&self, tau: f64) -> DVector<f64> {
        let dim = self.dim();
        let mut x = DVector::zeros(dim);
        for s in 0..dim {
            let mut v = self.coeffs[(s, 0)];
            for k in 1..=self.h {
                let (sin, cos) = (k as f64 * tau).sin_cos();
                v += self.coeffs[(s, k)] * cos + self.coeffs[(s, self.h + k)] * sin;
            }
            x[s] = v;
        }
        x
    }

    /// Term-wise derivative with respect to the scaled time tau.
    pub fn synthesize_derivative(&self, tau: f64) -> DVector<f64> {
        let dim = self.dim();
        let mut x = DVector::zeros(dim);
        for s in 0..dim {
            let mut v = 0.0;
            for k in 1..=self.h {
                let (sin, cos) = (k as f64 * tau).sin_cos();
                v += k as f64 * (self.coeffs[(s, self.h + k)] * cos - self.coeffs[(s, k)] * sin);
            }
            x[s] = v;
        }
        x
    }

    /// Evaluates onto the standard grid of n_p intervals with a duplicated
    /// endpoint.
    pub fn sample_grid(&self, n_p: usize) -> Result<PeriodicTrajectory> {
        let samples: Vec<_> = (0..=n_p)
            .map(|i| self.synthesize(TAU * i as f64 / n_p as f64))
            .collect();
        PeriodicTrajectory::new(self.omega, samples)
    }

    /// Discrete Fourier projection of uniform samples over one period
    /// (without a duplicated endpoint). Exact for content up to the Nyquist
    /// limit of the sample count.
    pub fn project(samples: &[DVector<f64>], h: usize, omega: f64) -> Self {
        let n_t = samples.len();
        let dim = samples[0].len();
        let mut coeffs = DMatrix::zeros(dim, 2 * h + 1);
        for s in 0..dim {
            coeffs[(s, 0)] = samples.iter().map(|x| x[s]).sum::<f64>() / n_t as f64;
            for k in 1..=h {
                let (mut ca, mut cb) = (0.0, 0.0);
                for (j, x) in samples.iter().enumerate() {
                    let (sin, cos) = (TAU * (k * j) as f64 / n_t as f64).sin_cos();
                    ca += x[s] * cos;
                    cb += x[s] * sin;
                }
                coeffs[(s, k)] = 2.0 * ca / n_t as f64;
                coeffs[(s, h + k)] = 2.0 * cb / n_t as f64;
            }
        }
        Self { h, omega, coeffs }
    }

    pub fn from_trajectory(traj: &PeriodicTrajectory, h: usize) -> Self {
        Self::project(&traj.samples()[..traj.n_p()], h, traj.omega())
    }

    /// Zero-pads (or truncates) to a different harmonic count, keeping the
    /// shared low harmonics; used to seed high-order solves from low ones.
    pub fn resize(&self, h_new: usize) -> Self {
        let dim = self.dim();
        let mut coeffs = DMatrix::zeros(dim, 2 * h_new + 1);
        let shared = self.h.min(h_new);
        for s in 0..dim {
            coeffs[(s, 0)] = self.coeffs[(s, 0)];
            for k in 1..=shared {
                coeffs[(s, k)] = self.coeffs[(s, k)];
                coeffs[(s, h_new + k)] = self.coeffs[(s, self.h + k)];
            }
        }
        Self {
            h: h_new,
            omega: self.omega,
            coeffs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HbmConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    /// Override the alternating frequency-time sample count; default
    /// max(256, 8H) rounded up to a power of two.
    pub n_t: Option<usize>,
}

impl Default for HbmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            fd_step: 1e-7,
            n_t: None,
        }
    }
}

fn aft_samples(h: usize, cfg: &HbmConfig) -> usize {
    cfg.n_t
        .unwrap_or_else(|| 256usize.max((8 * h).next_power_of_two()))
}

fn hbm_residual(
    sys: &SystemModel,
    sol: &FourierSolution,
    n_t: usize,
) -> DVector<f64> {
    let mut r_samples = Vec::with_capacity(n_t);
    for j in 0..n_t {
        let tau = TAU * j as f64 / n_t as f64;
        let x = sol.synthesize(tau);
        let dx = sol.synthesize_derivative(tau);
        r_samples.push(sys.rhs(&x, tau, sol.omega) - dx * sol.omega);
    }
    let projected = FourierSolution::project(&r_samples, sol.h, sol.omega);
    let dim = sys.dim();
    let width = 2 * sol.h + 1;
    let mut g = DVector::zeros(dim * width);
    for s in 0..dim {
        for c in 0..width {
            g[s * width + c] = projected.coeffs[(s, c)];
        }
    }
    g
}

fn unpack_coeffs(sol: &FourierSolution, v: &DVector<f64>) -> FourierSolution {
    let dim = sol.dim();
    let width = 2 * sol.h + 1;
    let mut coeffs = DMatrix::zeros(dim, width);
    for s in 0..dim {
        for c in 0..width {
            coeffs[(s, c)] = v[s * width + c];
        }
    }
    FourierSolution {
        h: sol.h,
        omega: sol.omega,
        coeffs,
    }
}

fn pack_coeffs(sol: &FourierSolution) -> DVector<f64> {
    let dim = sol.dim();
    let width = 2 * sol.h + 1;
    let mut v = DVector::zeros(dim * width);
    for s in 0..dim {
        for c in 0..width {
            v[s * width + c] = sol.coeffs[(s, c)];
        }
    }
    v
}

/// Converged coefficients plus the Newton corrections they cost; the count
/// feeds effort comparisons against the other methods.
#[derive(Debug)]
pub struct HbmRun {
    pub solution: FourierSolution,
    pub iterations: usize,
}

/// Harmonic balance with a finite-difference coefficient Jacobian and the
/// nonlinearity evaluated by synthesis, pointwise rhs, and projection.
/// Forced systems only: the frequency is a known input here.
pub fn hbm_solve(
    sys: &SystemModel,
    h: usize,
    omega: f64,
    guess: &FourierSolution,
    cfg: &HbmConfig,
) -> Result<FourierSolution> {
    hbm_solve_traced(sys, h, omega, guess, cfg).map(|run| run.solution)
}

pub fn hbm_solve_traced(
    sys: &SystemModel,
    h: usize,
    omega: f64,
    guess: &FourierSolution,
    cfg: &HbmConfig,
) -> Result<HbmRun> {
    if sys.autonomous() {
        return Err(Error::InvalidParameter(format!(
            "harmonic balance here needs a forced system, {} is autonomous",
            sys.name()
        )));
    }
    if guess.dim() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "guess has {} states, system has {}",
            guess.dim(),
            sys.dim()
        )));
    }
    let n_t = aft_samples(h, cfg);
    if n_t < 2 * h + 2 {
        return Err(Error::InvalidParameter(format!(
            "{n_t} time samples cannot resolve {h} harmonics"
        )));
    }

    let mut sol = guess.resize(h);
    sol.omega = omega;
    let unknowns = sys.dim() * (2 * h + 1);
    let mut residual = f64::INFINITY;

    for iteration in 0..cfg.max_iter {
        let g = hbm_residual(sys, &sol, n_t);
        residual = g.amax();
        if residual <= cfg.tol {
            return Ok(HbmRun {
                solution: sol,
                iterations: iteration,
            });
        }

        let mut jac = DMatrix::zeros(unknowns, unknowns);
        let packed = pack_coeffs(&sol);
        for c in 0..unknowns {
            let step = cfg.fd_step * (1.0 + packed[c].abs());
            let mut perturbed = packed.clone();
            perturbed[c] += step;
            let gp = hbm_residual(sys, &unpack_coeffs(&sol, &perturbed), n_t);
            jac.set_column(c, &((gp - &g) / step));
        }
        let delta = linalg::solve_dense(&jac, &(-&g))?;

        // damped acceptance: full step first, halve while it fails to
        // reduce the residual
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..5 {
            let candidate = unpack_coeffs(&sol, &(&packed + &delta * scale));
            let rc = hbm_residual(sys, &candidate, n_t).amax();
            if rc < residual {
                sol = candidate;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonStalled {
                iterations: iteration + 1,
                residual,
            });
        }
    }

    Err(Error::NewtonStalled {
        iterations: cfg.max_iter,
        residual,
    })
}

/// How far apart consecutive period-map returns may be for the settle run
/// to count as converged.
pub const SETTLE_DISPLACEMENT_TOL: f64 = 1e-8;

/// Integrates a stable system long enough for transients to die, then
/// samples one period on the standard grid. Purely brute force, which is
/// exactly why it is a useful third opinion.
pub fn steady_state_reference(
    sys: &SystemModel,
    omega: f64,
    n_p: usize,
    settle_periods: usize,
    n_s_per_period: usize,
) -> Result<PeriodicTrajectory> {
    let period = TAU / omega;
    let mut x = DVector::zeros(sys.dim());
    let mut displacements = Vec::with_capacity(settle_periods);
    for p in 0..settle_periods {
        let next = rk4_flow(sys, &x, p as f64 * period, period, n_s_per_period, omega)?;
        displacements.push((&next - &x).norm());
        x = next;
    }
    let settled = match displacements.last() {
        Some(&d_last) => {
            d_last <= SETTLE_DISPLACEMENT_TOL
                || displacements
                    .len()
                    .checked_sub(51)
                    .map(|i| d_last < displacements[i])
                    .unwrap_or(false)
        }
        None => false,
    };
    if !settled {
        return Err(Error::NotSettled {
            periods: settle_periods,
            displacement: displacements.last().copied().unwrap_or(f64::INFINITY),
        });
    }

    let k = n_s_per_period.div_ceil(n_p).max(1);
    let t0 = settle_periods as f64 * period;
    let samples = rk4_sample(sys, &x, t0, period, k * n_p, omega, k)?;
    PeriodicTrajectory::new(omega, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn resonant_oscillator() -> SystemModel {
        SystemModel::new(
            "resonant",
            2,
            false,
            |x, tau, _| DVector::from_vec(vec![x[1], 0.2 * tau.cos() - 0.05 * x[1] - x[0]]),
            |_, _, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.05]),
        )
    }

    fn harmonic_oscillator() -> SystemModel {
        SystemModel::new(
            "harmonic",
            2,
            true,
            |x, _, _| DVector::from_vec(vec![x[1], -x[0]]),
            |_, _, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        )
    }

    #[test]
    fn flow_of_frozen_field_keeps_state() {
        let sys = SystemModel::new(
            "frozen",
            2,
            true,
            |_, _, _| DVector::zeros(2),
            |_, _, _| DMatrix::zeros(2, 2),
        );
        let x0 = DVector::from_vec(vec![1.5, -0.25]);
        let x1 = rk4_flow(&sys, &x0, 0.0, 10.0, 100, 1.0).unwrap();
        assert_eq!(x1, x0);
    }

    #[test]
    fn scalar_decay_matches_exponential() {
        let sys = SystemModel::new(
            "decay",
            1,
            true,
            |x, _, _| -x.clone(),
            |_, _, _| DMatrix::from_element(1, 1, -1.0),
        );
        let x1 = rk4_flow(&sys, &DVector::from_element(1, 1.0), 0.0, 1.0, 1000, 1.0).unwrap();
        assert_relative_eq!(x1[0], (-1.0f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn closed_orbit_returns_and_error_shrinks_at_fourth_order() {
        let sys = harmonic_oscillator();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let fine = rk4_flow(&sys, &x0, 0.0, TAU, 1 << 14, 1.0).unwrap();
        assert!((fine - &x0).norm() < 1e-9);

        let coarse_err = (rk4_flow(&sys, &x0, 0.0, TAU, 256, 1.0).unwrap() - &x0).norm();
        let halved_err = (rk4_flow(&sys, &x0, 0.0, TAU, 512, 1.0).unwrap() - &x0).norm();
        let ratio = coarse_err / halved_err;
        assert!((12.0..20.0).contains(&ratio), "step-halving ratio {ratio}");
    }

    #[test]
    fn blow_up_is_reported_with_step_index() {
        let sys = SystemModel::new(
            "explode",
            1,
            true,
            |x, _, _| DVector::from_element(1, x[0] * x[0]),
            |x, _, _| DMatrix::from_element(1, 1, 2.0 * x[0]),
        );
        let out = rk4_flow(&sys, &DVector::from_element(1, 10.0), 0.0, 5.0, 100, 1.0);
        assert!(matches!(out, Err(Error::BlowUp { .. })));
    }

    #[test]
    fn shooting_finds_linear_steady_state() {
        let sys = resonant_oscillator();
        let cfg = ShootingConfig {
            n_s: 1 << 12,
            ..Default::default()
        };
        let sol = shooting_solve(&sys, &DVector::zeros(2), TAU, &cfg).unwrap();
        // steady state 4 sin(t): starts at (0, 4)
        assert_relative_eq!(sol.x0[0], 0.0, epsilon = 1e-8);
        assert_relative_eq!(sol.x0[1], 4.0, epsilon = 1e-8);

        // monodromy of a linear system is the period propagator
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.05]);
        let expected = linalg::mat_exp(&(a * TAU), linalg::EXP_TAYLOR_TERMS).unwrap();
        assert!((&sol.monodromy - &expected).amax() < 1e-6);
    }

    #[test]
    fn shooting_fixed_point_closes_the_orbit() {
        let params = BTreeMap::new();
        let b = crate::benchmarks::Benchmark::build("duffing", &params).unwrap();
        let cfg = ShootingConfig::default();
        let sol = shooting_solve(&b.system(), &DVector::from_vec(vec![0.5, 0.0]), TAU, &cfg)
            .unwrap();
        let back = rk4_flow(b.system(), &sol.x0, 0.0, sol.period, cfg.n_s, sol.omega()).unwrap();
        assert!((back - &sol.x0).amax() <= 1e-11);
    }

    #[test]
    fn shooting_autonomous_finds_limit_cycle_with_unit_multiplier() {
        let params = BTreeMap::new();
        let b = crate::benchmarks::Benchmark::build("vanderpol", &params).unwrap();
        let sol = shooting_solve(
            b.system(),
            &DVector::from_vec(vec![2.0, 0.0]),
            TAU,
            &ShootingConfig::default(),
        )
        .unwrap();
        assert!(
            (6.3..7.0).contains(&sol.period),
            "limit cycle period {}",
            sol.period
        );
        let eigs = linalg::eigenvalues(&sol.monodromy).unwrap();
        let trivial = eigs
            .iter()
            .map(|l| (l - 1.0).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(trivial < 1e-4, "no trivial multiplier in {eigs:?}");
    }

    #[test]
    fn fourier_projection_inverts_synthesis() {
        let mut sol = FourierSolution::zeros(2, 5, 1.0);
        sol.coeffs[(0, 0)] = 0.3;
        sol.coeffs[(0, 2)] = -1.2;
        sol.coeffs[(0, 9)] = 0.7;
        sol.coeffs[(1, 1)] = 0.05;
        sol.coeffs[(1, 6)] = 2.0;
        let n_t = 64;
        let samples: Vec<_> = (0..n_t)
            .map(|j| sol.synthesize(TAU * j as f64 / n_t as f64))
            .collect();
        let back = FourierSolution::project(&samples, 5, 1.0);
        assert!((&back.coeffs - &sol.coeffs).amax() < 1e-12);
    }

    #[test]
    fn hbm_linear_single_harmonic() {
        let sys = resonant_oscillator();
        let guess = FourierSolution::zeros(2, 1, 1.0);
        let sol = hbm_solve(&sys, 1, 1.0, &guess, &HbmConfig::default()).unwrap();
        // displacement 4 sin(tau), velocity 4 cos(tau)
        assert_relative_eq!(sol.coeffs[(0, 2)], 4.0, epsilon = 1e-8);
        assert_relative_eq!(sol.coeffs[(1, 1)], 4.0, epsilon = 1e-8);
        for &(s, c) in &[(0usize, 0usize), (0, 1), (1, 0), (1, 2)] {
            assert!(sol.coeffs[(s, c)].abs() <= 1e-10, "coeff ({s},{c})");
        }
    }

    #[test]
    fn hbm_rejects_autonomous_systems() {
        let params = BTreeMap::new();
        let b = crate::benchmarks::Benchmark::build("vanderpol", &params).unwrap();
        let guess = FourierSolution::zeros(2, 3, 1.0);
        assert!(matches!(
            hbm_solve(b.system(), 3, 1.0, &guess, &HbmConfig::default()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn settle_reaches_linear_amplitude() {
        let sys = resonant_oscillator();
        let traj = steady_state_reference(&sys, 1.0, 256, 200, 1024).unwrap();
        let amp = traj.component_amplitude(0);
        assert_relative_eq!(amp, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn drifting_system_reports_not_settled() {
        let sys = SystemModel::new(
            "drift",
            1,
            true,
            |_, _, _| DVector::from_element(1, 0.3),
            |_, _, _| DMatrix::zeros(1, 1),
        );
        assert!(matches!(
            steady_state_reference(&sys, 1.0, 16, 60, 64),
            Err(Error::NotSettled { .. })
        ));
    }
}
