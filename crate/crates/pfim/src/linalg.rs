//! Dense kernels used throughout the solver: matrix exponential, the phi_1
//! integral, LU solves and eigenvalues.
//!
//! Everything here works on `nalgebra` dynamic matrices. Sizes stay small
//! (state dimension squared, at most a few dozen rows), so the plain dense
//! algorithms below are both fast enough and easy to audit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Taylor terms kept after scaling in `mat_exp` / `phi1`. With the norm
/// scaled below 0.5 the truncation error sits near 1e-14.
pub const EXP_TAYLOR_TERMS: usize = 12;

/// Norm threshold for the scaling step of the exponential.
const EXP_SCALE_THRESHOLD: f64 = 0.5;

/// Relative pivot threshold below which `lu_factor` declares the matrix
/// singular.
pub const PIVOT_REL_TOL: f64 = 1e-14;

/// Maximum column sum (the induced 1-norm).
pub fn norm_1(a: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

fn check_square_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Shared core: computes exp(A*dt) and phi1(A, dt) = integral of exp(A*s)
/// over [0, dt] in one pass.
///
/// The argument is scaled until its 1-norm drops below 0.5, both series are
/// summed to `max_term`, and the results are recombined by squaring
/// (exponential) and the doubling identity phi(2t) = (exp(A t) + I) phi(t).
/// The series route keeps phi1 well defined for singular A, where the
/// textbook form (exp(A dt) - I) A^-1 breaks down.
fn exp_phi1_core(a: &DMatrix<f64>, dt: f64, max_term: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_square_finite(a)?;
    if !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite step {dt}")));
    }
    let n = a.nrows();
    let scaled_norm = norm_1(a) * dt.abs();
    let j = if scaled_norm <= EXP_SCALE_THRESHOLD {
        0u32
    } else {
        (scaled_norm / EXP_SCALE_THRESHOLD).log2().ceil() as u32
    };
    let h = dt / f64::powi(2.0, j as i32);
    let b = a * h;

    let eye = DMatrix::<f64>::identity(n, n);
    let mut term = eye.clone();
    let mut exp = eye.clone();
    let mut phi = eye.clone();
    for k in 1..=max_term {
        term = (&term * &b) / k as f64;
        exp += &term;
        phi += &term / (k + 1) as f64;
    }
    phi *= h;
    for _ in 0..j {
        phi = (&exp + &eye) * phi;
        exp = &exp * &exp;
    }
    Ok((exp, phi))
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn mat_exp(a: &DMatrix<f64>, max_term: usize) -> Result<DMatrix<f64>> {
    Ok(exp_phi1_core(a, 1.0, max_term)?.0)
}

/// phi1(A, dt) = (exp(A dt) - I) A^-1, evaluated by series so that singular
/// A is handled without forming an inverse.
pub fn phi1(a: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    Ok(exp_phi1_core(a, dt, EXP_TAYLOR_TERMS)?.1)
}

/// Both propagation factors for one frozen-coefficient interval.
pub fn exp_and_phi1(a: &DMatrix<f64>, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    exp_phi1_core(a, dt, EXP_TAYLOR_TERMS)
}

/// LU factorization with partial pivoting.
pub struct LuFactors {
    lu: DMatrix<f64>,
    piv: Vec<usize>,
}

/// Factors `a` in place (on a copy). Declares the matrix singular when a
/// pivot falls below `PIVOT_REL_TOL` times the largest entry of the input.
pub fn lu_factor(a: &DMatrix<f64>) -> Result<LuFactors> {
    check_square_finite(a)?;
    let n = a.nrows();
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    let amax = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = PIVOT_REL_TOL * amax;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best <= tol {
            return Err(Error::Singular { pivot_index: k });
        }
        if p != k {
            lu.swap_rows(p, k);
            piv.swap(p, k);
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            for j in k + 1..n {
                let delta = factor * lu[(k, j)];
                lu[(i, j)] -= delta;
            }
        }
    }
    Ok(LuFactors { lu, piv })
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let mut x = DVector::<f64>::zeros(n);
        for i in 0..n {
            x[i] = b[self.piv[i]];
        }
        for i in 0..n {
            for j in 0..i {
                let delta = self.lu[(i, j)] * x[j];
                x[i] -= delta;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let delta = self.lu[(i, j)] * x[j];
                x[i] -= delta;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    /// Solves A X = B column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(self.dim(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve(&b.column(j).clone_owned());
            out.set_column(j, &col);
        }
        out
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.solve_matrix(&DMatrix::<f64>::identity(n, n))
    }
}

/// Direct dense solve of A x = b.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, right-hand side has {} entries",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    Ok(lu_factor(a)?.solve(b))
}

/// All eigenvalues of a real dense matrix: Householder reduction to
/// Hessenberg form followed by shifted (Francis double step) QR iteration.
/// Returned values are sorted by modulus, largest first; complex pairs come
/// out conjugate.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    check_square_finite(a)?;
    let n = a.nrows();
    if n == 1 {
        return Ok(vec![Complex64::new(a[(0, 0)], 0.0)]);
    }
    let mut h = a.clone();
    hessenberg_in_place(&mut h);
    let mut re = vec![0.0f64; n];
    let mut im = vec![0.0f64; n];
    hqr(&mut h, &mut re, &mut im)?;
    let mut vals: Vec<Complex64> = re
        .into_iter()
        .zip(im)
        .map(|(r, i)| Complex64::new(r, i))
        .collect();
    vals.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    Ok(vals)
}

/// True when every eigenvalue's conjugate is also present (within `tol`).
pub fn conjugate_closed(spectrum: &[Complex64], tol: f64) -> bool {
    spectrum.iter().all(|lam| {
        spectrum
            .iter()
            .any(|other| (other - lam.conj()).norm() <= tol)
    })
}

fn hessenberg_in_place(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    if n <= 2 {
        return;
    }
    let mut ort = vec![0.0f64; n];
    for m in 1..n - 1 {
        let mut scale = 0.0;
        for i in m..n {
            scale += h[(i, m - 1)].abs();
        }
        if scale == 0.0 {
            continue;
        }
        let mut h_sum = 0.0;
        for i in (m..n).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            h_sum += ort[i] * ort[i];
        }
        let mut g = h_sum.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        h_sum -= ort[m] * g;
        ort[m] -= g;
        for j in m..n {
            let mut f = 0.0;
            for i in (m..n).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= h_sum;
            for i in m..n {
                let delta = f * ort[i];
                h[(i, j)] -= delta;
            }
        }
        for i in 0..n {
            let mut f = 0.0;
            for j in (m..n).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= h_sum;
            for j in m..n {
                let delta = f * ort[j];
                h[(i, j)] -= delta;
            }
        }
        h[(m, m - 1)] = scale * g;
        for i in m + 1..n {
            h[(i, m - 1)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, eigenvalues only.
/// Ported from the classical EISPACK/JAMA routine. The total sweep budget is
/// 30 per dimension; exceeding it is reported as an error.
fn hqr(h: &mut DMatrix<f64>, re: &mut [f64], im: &mut [f64]) -> Result<()> {
    let nn = h.nrows();
    let low = 0usize;
    let eps = f64::EPSILON;
    let budget = 30 * nn;
    let mut sweeps = 0usize;
    let mut exshift = 0.0f64;
    #[allow(unused_assignments)]
    let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);

    let mut norm = 0.0f64;
    for i in 0..nn {
        let j0 = i.saturating_sub(1);
        for j in j0..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n_cur = nn as isize - 1;
    let mut iter = 0usize;
    while n_cur >= low as isize {
        let n = n_cur as usize;
        let mut l = n;
        while l > low {
            let mut s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            re[n] = h[(n, n)] + exshift;
            im[n] = 0.0;
            n_cur -= 1;
            iter = 0;
        } else if l == n - 1 {
            let w = h[(n, n - 1)] * h[(n - 1, n)];
            let pp = (h[(n - 1, n - 1)] - h[(n, n)]) / 2.0;
            let qq = pp * pp + w;
            let zz = qq.abs().sqrt();
            let x = h[(n, n)] + exshift;
            if qq >= 0.0 {
                let z = if pp >= 0.0 { pp + zz } else { pp - zz };
                re[n - 1] = x + z;
                re[n] = if z != 0.0 { x - w / z } else { re[n - 1] };
                im[n - 1] = 0.0;
                im[n] = 0.0;
            } else {
                re[n - 1] = x + pp;
                re[n] = x + pp;
                im[n - 1] = zz;
                im[n] = -zz;
            }
            n_cur -= 2;
            iter = 0;
        } else {
            let mut x = h[(n, n)];
            let mut y = 0.0;
            let mut w = 0.0;
            if l < n {
                y = h[(n - 1, n - 1)];
                w = h[(n, n - 1)] * h[(n - 1, n)];
            }
            if iter == 10 || iter == 20 {
                exshift += x;
                for i in low..=n {
                    h[(i, i)] -= x;
                }
                let s = h[(n, n - 1)].abs() + h[(n - 1, n - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            iter += 1;
            sweeps += 1;
            if sweeps > budget {
                return Err(Error::EigenIterationLimit { sweeps: budget });
            }

            let mut m = n - 2;
            loop {
                let z = h[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - rr - ss;
                r = h[(m + 2, m + 1)];
                let scale = p.abs() + q.abs() + r.abs();
                p /= scale;
                q /= scale;
                r /= scale;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps
                        * (p.abs()
                            * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=n {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            for k in m..n {
                let notlast = k != n - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                let mut s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        let mut pp = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            pp += r * h[(k + 2, j)];
                            let delta = pp * z;
                            h[(k + 2, j)] -= delta;
                        }
                        let d0 = pp * x;
                        let d1 = pp * y;
                        h[(k, j)] -= d0;
                        h[(k + 1, j)] -= d1;
                    }
                    let upper = if n < k + 3 { n } else { k + 3 };
                    for i in 0..=upper {
                        let mut pp = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            pp += z * h[(i, k + 2)];
                            let delta = pp * r;
                            h[(i, k + 2)] -= delta;
                        }
                        let d1 = pp * q;
                        h[(i, k)] -= pp;
                        h[(i, k + 1)] -= d1;
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let a = DMatrix::<f64>::zeros(3, 3);
        let e = mat_exp(&a, EXP_TAYLOR_TERMS).unwrap();
        assert_eq!(e, DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn exp_of_nilpotent_is_exact() {
        let a = mat(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = mat_exp(&a, EXP_TAYLOR_TERMS).unwrap();
        let expected = mat(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_relative_eq!(e, expected, epsilon = 1e-15);
    }

    #[test]
    fn exp_of_rotation_matches_trig() {
        let theta = 1.3f64;
        let a = mat(2, 2, &[0.0, -theta, theta, 0.0]);
        let e = mat_exp(&a, EXP_TAYLOR_TERMS).unwrap();
        let expected = mat(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        assert_relative_eq!(e, expected, epsilon = 1e-13);
    }

    #[test]
    fn exp_with_scaling_matches_scalar_exponential() {
        let a = mat(1, 1, &[7.5]);
        let e = mat_exp(&a, EXP_TAYLOR_TERMS).unwrap();
        assert_relative_eq!(e[(0, 0)], 7.5f64.exp(), max_relative = 1e-13);
    }

    #[test]
    fn phi1_of_zero_matrix_is_dt_identity() {
        let a = DMatrix::<f64>::zeros(4, 4);
        let p = phi1(&a, 0.37).unwrap();
        assert_relative_eq!(p, DMatrix::<f64>::identity(4, 4) * 0.37, epsilon = 1e-15);
    }

    #[test]
    fn phi1_scalar_value() {
        let a = mat(1, 1, &[2.0]);
        let p = phi1(&a, 0.5).unwrap();
        assert_relative_eq!(p[(0, 0)], (1f64.exp() - 1.0) / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn phi1_handles_singular_argument() {
        let a = mat(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let dt = 0.25;
        let p = phi1(&a, dt).unwrap();
        // exact: dt*I + A dt^2/2 for a nilpotent of index 2
        let expected = mat(2, 2, &[dt, dt * dt / 2.0, 0.0, dt]);
        assert_relative_eq!(p, expected, epsilon = 1e-15);
    }

    #[test]
    fn phi1_consistent_with_exponential() {
        let a = mat(2, 2, &[0.3, -1.1, 0.7, -0.2]);
        let dt = 0.8;
        let p = phi1(&a, dt).unwrap();
        let e = mat_exp(&(&a * dt), EXP_TAYLOR_TERMS).unwrap();
        let check = &p * &a + DMatrix::<f64>::identity(2, 2);
        assert_relative_eq!(check, e, epsilon = 1e-13);
    }

    #[test]
    fn rejects_non_square() {
        let a = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            mat_exp(&a, EXP_TAYLOR_TERMS),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = DMatrix::<f64>::zeros(2, 2);
        a[(1, 0)] = f64::NAN;
        assert!(matches!(
            mat_exp(&a, EXP_TAYLOR_TERMS),
            Err(Error::NonFinite { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn solve_dense_small_system() {
        let a = mat(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![5.0, 10.0]);
        let x = solve_dense(&a, &b).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_dense_reports_singularity_with_pivot() {
        let a = mat(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        match solve_dense(&a, &b) {
            Err(Error::Singular { pivot_index }) => assert_eq!(pivot_index, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn solve_dense_residual_bound() {
        // moderately ill-conditioned but solvable
        let a = mat(
            3,
            3,
            &[1.0, 0.5, 0.3333, 0.5, 0.3333, 0.25, 0.3333, 0.25, 0.2],
        );
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = solve_dense(&a, &b).unwrap();
        let res = (&a * &x - &b).amax();
        let bound = 1e-10 * (norm_1(&a.transpose()) * x.amax() + b.amax());
        assert!(res <= bound, "residual {res} above bound {bound}");
    }

    #[test]
    fn eigenvalues_of_diagonal_matrix() {
        let a = mat(3, 3, &[3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.5]);
        let vals = eigenvalues(&a).unwrap();
        let mut re: Vec<f64> = vals.iter().map(|v| v.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(re[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(re[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(re[2], 3.0, epsilon = 1e-12);
        assert!(vals.iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn eigenvalues_of_rotation_are_conjugate_pair() {
        let a = mat(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        let vals = eigenvalues(&a).unwrap();
        assert!(conjugate_closed(&vals, 1e-12));
        assert_relative_eq!(vals[0].im.abs(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(vals[0].re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_of_companion_matrix() {
        // x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3)
        let a = mat(
            3,
            3,
            &[6.0, -11.0, 6.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        );
        let vals = eigenvalues(&a).unwrap();
        let mut re: Vec<f64> = vals.iter().map(|v| v.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(re[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(re[1], 2.0, epsilon = 1e-9);
        assert_relative_eq!(re[2], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn eigenvalues_sorted_by_modulus() {
        let a = mat(2, 2, &[0.1, 0.0, 0.0, -5.0]);
        let vals = eigenvalues(&a).unwrap();
        assert_relative_eq!(vals[0].re, -5.0, epsilon = 1e-12);
    }
}
