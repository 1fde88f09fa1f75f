//! Error measurement for convergence studies: deviation of a grid solution
//! from a reference, per-iterate error sequences, and the fitted
//! convergence order of such a sequence.

use crate::error::{Error, Result};
use crate::system::PeriodicTrajectory;

/// Mean absolute deviation of one state component over the unique grid
/// nodes. Both trajectories must live on the same grid; the reference is
/// expected to have been sampled onto it by integration, not interpolation.
pub fn grid_mean_error(
    study: &PeriodicTrajectory,
    reference: &PeriodicTrajectory,
    component: usize,
) -> Result<f64> {
    if study.n_p() != reference.n_p() || study.dim() != reference.dim() {
        return Err(Error::DimensionMismatch(format!(
            "study grid {}x{} vs reference {}x{}",
            study.n_p(),
            study.dim(),
            reference.n_p(),
            reference.dim()
        )));
    }
    let n = study.n_p();
    let sum: f64 = (0..n)
        .map(|i| (study.sample(i)[component] - reference.sample(i)[component]).abs())
        .sum();
    Ok(sum / n as f64)
}

/// Per-iterate displacement errors against a fixed reference.
pub fn trajectory_errors(
    iterates: &[PeriodicTrajectory],
    reference: &PeriodicTrajectory,
    component: usize,
) -> Result<Vec<f64>> {
    iterates
        .iter()
        .map(|it| grid_mean_error(it, reference, component))
        .collect()
}

pub fn omega_errors(iterates: &[PeriodicTrajectory], reference_omega: f64) -> Vec<f64> {
    iterates
        .iter()
        .map(|it| (it.omega() - reference_omega).abs())
        .collect()
}

/// Smallest error the sequence reaches; the level it stagnates at once the
/// iteration hits discretization or reference accuracy.
pub fn error_plateau(errors: &[f64]) -> f64 {
    errors
        .iter()
        .copied()
        .filter(|e| e.is_finite())
        .fold(f64::INFINITY, f64::min)
}

/// Least-squares slope of log e_{i+1} against log e_i, which estimates p in
/// e_{i+1} ~ C e_i^p. Pairs inside the stagnation floor (within 10x of the
/// plateau) or in the far pre-asymptotic range (e_i > 1) carry no rate
/// information and are excluded. None when fewer than two pairs survive.
pub fn fitted_order(errors: &[f64]) -> Option<f64> {
    let plateau = error_plateau(errors);
    if !plateau.is_finite() {
        return None;
    }
    let floor = (10.0 * plateau).max(1e-15);
    let mut points = Vec::new();
    for w in errors.windows(2) {
        let (e0, e1) = (w[0], w[1]);
        if e0.is_finite() && e1.is_finite() && e0 <= 1.0 && e0 > floor && e1 > floor {
            points.push((e0.ln(), e1.ln()));
        }
    }
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in &points {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    if var == 0.0 {
        return None;
    }
    Some(cov / var)
}
