//! Cantilever beam finite element model: 10 nodes, 9 identical
//! Euler-Bernoulli elements, clamped at node 1. After striking the clamped
//! DOFs the model has 18 degrees of freedom ordered (y2, th2, ..., y10,
//! th10), so y5 sits at index 6 and y10 at index 16. A cubic plus clearance
//! spring acts on y5 and a vertical harmonic force drives y10.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub const N_DOF: usize = 18;
pub const STATE_DIM: usize = 2 * N_DOF;
/// Index of the node-5 translation in the reduced DOF vector.
pub const NODE5_Y: usize = 6;
/// Index of the node-10 translation (driven, and the reported amplitude).
pub const NODE10_Y: usize = 16;

pub const LENGTH: f64 = 8.0;
pub const WIDTH: f64 = 0.02;
pub const HEIGHT: f64 = 0.2;
pub const YOUNG: f64 = 3.0e9;
pub const DENSITY: f64 = 7800.0;
pub const N_ELEMENTS: usize = 9;

/// Reduced structural matrices plus the Rayleigh data they were built from.
#[derive(Debug, Clone)]
pub struct FeBeamAssembly {
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub omega1: f64,
    pub omega2: f64,
    pub alpha: f64,
    pub beta: f64,
}

fn element_matrices() -> (DMatrix<f64>, DMatrix<f64>) {
    let le = LENGTH / N_ELEMENTS as f64;
    let area = WIDTH * HEIGHT;
    let inertia = WIDTH * HEIGHT.powi(3) / 12.0;

    let ks = YOUNG * inertia / le.powi(3);
    #[rustfmt::skip]
    let k_e = DMatrix::from_row_slice(4, 4, &[
        12.0,      6.0 * le,       -12.0,      6.0 * le,
        6.0 * le,  4.0 * le * le,  -6.0 * le,  2.0 * le * le,
        -12.0,     -6.0 * le,      12.0,       -6.0 * le,
        6.0 * le,  2.0 * le * le,  -6.0 * le,  4.0 * le * le,
    ]) * ks;

    let ms = DENSITY * area * le / 420.0;
    #[rustfmt::skip]
    let m_e = DMatrix::from_row_slice(4, 4, &[
        156.0,      22.0 * le,       54.0,       -13.0 * le,
        22.0 * le,  4.0 * le * le,   13.0 * le,  -3.0 * le * le,
        54.0,       13.0 * le,       156.0,      -22.0 * le,
        -13.0 * le, -3.0 * le * le,  -22.0 * le, 4.0 * le * le,
    ]) * ms;

    (k_e, m_e)
}

/// Assembles the clamped beam and fits Rayleigh damping to a 2% ratio at
/// the first two bending modes.
pub fn assemble_fe_beam(zeta: f64) -> Result<FeBeamAssembly> {
    let (k_e, m_e) = element_matrices();

    // assemble the full 20-DOF model first, then strike the clamped pair
    let full = 2 * (N_ELEMENTS + 1);
    let mut k_full = DMatrix::zeros(full, full);
    let mut m_full = DMatrix::zeros(full, full);
    for e in 0..N_ELEMENTS {
        let base = 2 * e;
        for i in 0..4 {
            for j in 0..4 {
                k_full[(base + i, base + j)] += k_e[(i, j)];
                m_full[(base + i, base + j)] += m_e[(i, j)];
            }
        }
    }
    let keep: Vec<usize> = (2..full).collect();
    let k = k_full.select_rows(&keep).select_columns(&keep);
    let m = m_full.select_rows(&keep).select_columns(&keep);

    let m_lu = linalg::lu_factor(&m)?;
    let spectrum = linalg::eigenvalues(&m_lu.solve_matrix(&k))?;
    let mut freqs: Vec<f64> = spectrum
        .iter()
        .filter(|l| l.re > 0.0 && l.im.abs() < 1e-6 * l.re.abs())
        .map(|l| l.re.sqrt())
        .collect();
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if freqs.len() < 2 {
        return Err(Error::InvalidParameter(
            "beam generalized eigenproblem yielded fewer than two real modes".into(),
        ));
    }
    let (omega1, omega2) = (freqs[0], freqs[1]);

    let alpha = 2.0 * zeta * omega1 * omega2 / (omega1 + omega2);
    let beta = 2.0 * zeta / (omega1 + omega2);
    let c = &m * alpha + &k * beta;

    Ok(FeBeamAssembly {
        m,
        c,
        k,
        omega1,
        omega2,
        alpha,
        beta,
    })
}

/// Restoring force of the cubic plus clearance spring at node 5. The gap
/// spring engages only once y5 has moved past the clearance delta in the
/// negative direction; the boundary point itself belongs to the cubic-only
/// branch.
pub fn fe_nonlinear_force(y5: f64, beta1: f64, k2: f64, delta: f64) -> f64 {
    if y5 < -delta {
        beta1 * y5.powi(3) + k2 * (y5 + delta)
    } else {
        beta1 * y5.powi(3)
    }
}

/// d force / d y5, branch assignment as in `fe_nonlinear_force`.
pub fn fe_nonlinear_slope(y5: f64, beta1: f64, k2: f64, delta: f64) -> f64 {
    let cubic = 3.0 * beta1 * y5 * y5;
    if y5 < -delta {
        cubic + k2
    } else {
        cubic
    }
}

/// Steady-state response of the beam with the node-5 spring removed, under
/// f0*sin(omega t) at node 10. Returns (s, c) with X(t) = s*sin(omega t) +
/// c*cos(omega t); the harmonic balance of the linear system is solved as
/// one real 36x36 block system.
pub fn linear_beam_solution(
    asm: &FeBeamAssembly,
    omega: f64,
    f0: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = N_DOF;
    let kw = &asm.k - &asm.m * (omega * omega);
    let cw = &asm.c * omega;
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&kw);
    block.view_mut((0, n), (n, n)).copy_from(&(-&cw));
    block.view_mut((n, 0), (n, n)).copy_from(&cw);
    block.view_mut((n, n), (n, n)).copy_from(&kw);

    let mut rhs = DVector::zeros(2 * n);
    rhs[NODE10_Y] = f0;
    let sol = linalg::solve_dense(&block, &rhs)?;
    Ok((sol.rows(0, n).into(), sol.rows(n, n).into()))
}
