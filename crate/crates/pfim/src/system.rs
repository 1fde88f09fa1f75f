//! Dynamical system interface and the periodic trajectory container.
//!
//! Systems are posed in scaled time tau = omega * t, so one period always
//! spans [0, 2*pi]. The right-hand side reports derivatives with respect to
//! physical time t; solvers divide by omega where scaled-time rates are
//! needed.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

type RhsFn = dyn Fn(&DVector<f64>, f64, f64) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>, f64, f64) -> DMatrix<f64> + Send + Sync;

/// A first-order system x_dot = f(x, tau, omega) with an analytic Jacobian
/// d f / d x. Forced systems read the phase tau; autonomous ones ignore it.
pub struct SystemModel {
    name: String,
    dim: usize,
    autonomous: bool,
    rhs: Box<RhsFn>,
    jac: Box<JacFn>,
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        autonomous: bool,
        rhs: impl Fn(&DVector<f64>, f64, f64) -> DVector<f64> + Send + Sync + 'static,
        jac: impl Fn(&DVector<f64>, f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            autonomous,
            rhs: Box::new(rhs),
            jac: Box::new(jac),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn autonomous(&self) -> bool {
        self.autonomous
    }

    /// Time derivative of the state with respect to physical time.
    pub fn rhs(&self, x: &DVector<f64>, tau: f64, omega: f64) -> DVector<f64> {
        let out = (self.rhs)(x, tau, omega);
        debug_assert_eq!(out.len(), self.dim);
        out
    }

    /// State Jacobian of the right-hand side.
    pub fn jacobian(&self, x: &DVector<f64>, tau: f64, omega: f64) -> DMatrix<f64> {
        let out = (self.jac)(x, tau, omega);
        debug_assert_eq!(out.nrows(), self.dim);
        debug_assert_eq!(out.ncols(), self.dim);
        out
    }
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

/// Candidate or converged periodic solution sampled on a uniform grid over
/// [0, 2*pi]. The grid stores n_p + 1 nodes; the last one duplicates the
/// first so that closure is explicit.
#[derive(Debug, Clone)]
pub struct PeriodicTrajectory {
    omega: f64,
    samples: Vec<DVector<f64>>,
}

impl PeriodicTrajectory {
    pub const MIN_INTERVALS: usize = 8;

    /// Builds a trajectory from n_p + 1 samples. The final sample is
    /// overwritten with a copy of the first, which keeps the closure
    /// invariant exact regardless of what the caller passed.
    pub fn new(omega: f64, samples: Vec<DVector<f64>>) -> Result<Self> {
        if samples.len() < Self::MIN_INTERVALS + 1 {
            return Err(Error::GridTooCoarse {
                n_p: samples.len().saturating_sub(1),
                min: Self::MIN_INTERVALS,
            });
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega must be positive and finite, got {omega}"
            )));
        }
        let dim = samples[0].len();
        if dim == 0 || samples.iter().any(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch(
                "trajectory samples must share a nonzero dimension".into(),
            ));
        }
        if let Some((i, v)) = samples
            .iter()
            .enumerate()
            .find_map(|(i, s)| s.iter().find(|v| !v.is_finite()).map(|v| (i, *v)))
        {
            return Err(Error::NonFinite {
                row: i,
                col: 0,
                value: v,
            });
        }
        let mut samples = samples;
        let first = samples[0].clone();
        *samples.last_mut().unwrap() = first;
        Ok(Self { omega, samples })
    }

    /// Samples `f(tau)` on a uniform grid of n_p intervals.
    pub fn from_fn(
        omega: f64,
        n_p: usize,
        f: impl Fn(f64) -> DVector<f64>,
    ) -> Result<Self> {
        let dtau = TAU / n_p.max(1) as f64;
        let samples: Vec<DVector<f64>> = (0..=n_p).map(|i| f(i as f64 * dtau)).collect();
        Self::new(omega, samples)
    }

    pub fn zeros(omega: f64, n_p: usize, dim: usize) -> Result<Self> {
        Self::from_fn(omega, n_p, |_| DVector::zeros(dim))
    }

    pub fn n_p(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn dtau(&self) -> f64 {
        TAU / self.n_p() as f64
    }

    pub fn tau(&self, i: usize) -> f64 {
        i as f64 * self.dtau()
    }

    /// Physical period 2*pi / omega.
    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    pub fn sample(&self, i: usize) -> &DVector<f64> {
        &self.samples[i]
    }

    /// All n_p + 1 samples, endpoint duplicated.
    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub(crate) fn set_omega(&mut self, omega: f64) -> Result<()> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega must be positive and finite, got {omega}"
            )));
        }
        self.omega = omega;
        Ok(())
    }

    /// Returns a copy with a different omega, leaving samples untouched.
    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        let mut out = self.clone();
        out.set_omega(omega)?;
        Ok(out)
    }

    /// Adds a per-node correction. `delta` must carry n_p + 1 entries with
    /// the endpoint duplicated; afterwards the closure invariant is
    /// re-pinned from node zero.
    pub(crate) fn apply_correction(&mut self, delta: &[DVector<f64>]) {
        assert_eq!(delta.len(), self.samples.len());
        for (s, d) in self.samples.iter_mut().zip(delta) {
            *s += d;
        }
        let first = self.samples[0].clone();
        *self.samples.last_mut().unwrap() = first;
    }

    /// Largest absolute value of one state component over the grid.
    pub fn component_amplitude(&self, index: usize) -> f64 {
        self.samples[..self.n_p()]
            .iter()
            .fold(0.0f64, |m, s| m.max(s[index].abs()))
    }
}

/// Scaled-time derivative d x / d tau on the grid by fourth-order central
/// differences with periodic wraparound. Spectral differentiation was
/// deliberately avoided: the benchmark set includes non-smooth solutions,
/// and a local stencil keeps the error of a kink local instead of spreading
/// it over the whole period.
pub fn grid_derivative(traj: &PeriodicTrajectory) -> Vec<DVector<f64>> {
    let n = traj.n_p();
    let dtau = traj.dtau();
    let s = traj.samples();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let ip1 = (i + 1) % n;
        let ip2 = (i + 2) % n;
        let im1 = (i + n - 1) % n;
        let im2 = (i + n - 2) % n;
        let d = (-&s[ip2] + &s[ip1] * 8.0 - &s[im1] * 8.0 + &s[im2]) / (12.0 * dtau);
        out.push(d);
    }
    out.push(out[0].clone());
    out
}

/// Residual R_i = f(x_i, tau_i, omega) - omega * x'_i at every node.
pub fn residual(sys: &SystemModel, traj: &PeriodicTrajectory) -> Result<Vec<DVector<f64>>> {
    if sys.dim() != traj.dim() {
        return Err(Error::DimensionMismatch(format!(
            "system dimension {} vs trajectory dimension {}",
            sys.dim(),
            traj.dim()
        )));
    }
    let deriv = grid_derivative(traj);
    Ok(residual_with_derivative(sys, traj, &deriv))
}

pub(crate) fn residual_with_derivative(
    sys: &SystemModel,
    traj: &PeriodicTrajectory,
    deriv: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let omega = traj.omega();
    let n = traj.n_p();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let f = sys.rhs(traj.sample(i), traj.tau(i), omega);
        out.push(f - &deriv[i] * omega);
    }
    out.push(out[0].clone());
    out
}

/// Average residual measure: the Euclidean norm of the node-averaged
/// residual vector, duplicate endpoint included. Opposite-signed residuals
/// cancel here, so this is cheap but can understate pointwise error; pair it
/// with `max_node_norm` when reporting.
pub fn average_error(residuals: &[DVector<f64>]) -> f64 {
    let mut acc = residuals[0].clone() * 0.0;
    for r in residuals {
        acc += r;
    }
    acc /= residuals.len() as f64;
    acc.norm()
}

/// Largest per-node Euclidean norm, a cancellation-free companion to
/// `average_error`.
pub fn max_node_norm(vectors: &[DVector<f64>]) -> f64 {
    vectors.iter().fold(0.0f64, |m, v| m.max(v.norm()))
}

/// Floor used in the denominator of `relative_update` so nodes passing
/// through zero do not blow the measure up.
pub const RELATIVE_UPDATE_FLOOR: f64 = 1e-8;

/// Mean relative correction size over the grid (duplicate endpoint
/// included).
pub fn relative_update(traj: &PeriodicTrajectory, delta: &[DVector<f64>]) -> f64 {
    assert_eq!(delta.len(), traj.samples().len());
    let mut acc = 0.0;
    for (x, d) in traj.samples().iter().zip(delta) {
        acc += d.norm() / x.norm().max(RELATIVE_UPDATE_FLOOR);
    }
    acc / delta.len() as f64
}

/// Worst deviation between the analytic Jacobian and a central finite
/// difference of the right-hand side. Used by tests to validate hand-written
/// Jacobians away from switching surfaces.
pub fn jacobian_fd_deviation(
    sys: &SystemModel,
    x: &DVector<f64>,
    tau: f64,
    omega: f64,
    step: f64,
) -> f64 {
    let jac = sys.jacobian(x, tau, omega);
    let mut worst = 0.0f64;
    for j in 0..sys.dim() {
        let h = step * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = sys.rhs(&xp, tau, omega);
        let fm = sys.rhs(&xm, tau, omega);
        for i in 0..sys.dim() {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            worst = worst.max((fd - jac[(i, j)]).abs());
        }
    }
    worst
}
