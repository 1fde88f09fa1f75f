//! Catalog of the benchmark systems exercised throughout the crate, from
//! smooth oscillators down to a discontinuously forced one and a 36-state
//! finite element beam. Each entry carries its default parameters, an
//! initial guess recipe good enough to land in the right basin, and a
//! distance-to-switching-surface helper so tests can stay clear of
//! non-smooth points.

pub mod beam;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::system::{PeriodicTrajectory, SystemModel};

/// Continuity class of the right-hand side, which is what governs how fast
/// the iteration converges on each system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    C1,
    C0,
    CMinus1,
    /// Discontinuity sits in the forcing only, so the Jacobian is unaffected.
    CMinus1Forcing,
}

pub const CATALOG: [&str; 8] = [
    "vanderpol",
    "duffing",
    "quad-drag",
    "abs-spring",
    "coulomb",
    "heaviside-piecewise",
    "square-wave",
    "fe-beam",
];

/// Unit-amplitude square wave: 1 on [0, T/2), 0 on [T/2, T), extended
/// periodically to all of t.
pub fn square_wave(t: f64, period: f64) -> f64 {
    if t.rem_euclid(period) < 0.5 * period {
        1.0
    } else {
        0.0
    }
}

/// sign with sign(0) = 0, unlike f64::signum.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn heaviside_switch(x: f64, v: f64) -> f64 {
    // G = 2*v*H(-v) + 10*x with H(y) = 1 only for y > 0
    if v < 0.0 {
        2.0 * v + 10.0 * x
    } else {
        10.0 * x
    }
}

/// A catalog entry: the system itself plus the metadata the CLI and the
/// studies need to run it unattended.
pub struct Benchmark {
    name: &'static str,
    smoothness: Smoothness,
    params: BTreeMap<String, f64>,
    default_omega: f64,
    amplitude_index: usize,
    system: SystemModel,
    assembly: Option<Arc<beam::FeBeamAssembly>>,
}

impl Benchmark {
    pub fn build(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let canonical = CATALOG
            .iter()
            .copied()
            .find(|c| *c == name)
            .ok_or_else(|| Error::UnknownSystem(name.to_string()))?;

        let defaults: &[(&str, f64)] = match canonical {
            "vanderpol" => &[("mu", 0.9)],
            "duffing" => &[("damping", 0.1), ("cubic", 0.1), ("forcing", 1.0)],
            "quad-drag" => &[("damping", 0.05), ("drag", 0.5), ("forcing", 0.2)],
            "abs-spring" => &[("damping", 0.05), ("spring", 0.5), ("forcing", 0.2)],
            "coulomb" => &[("damping", 0.05), ("friction", 0.02), ("forcing", 0.2)],
            "heaviside-piecewise" => &[("damping", 0.05), ("forcing", 0.2)],
            "square-wave" => &[("damping", 0.05), ("cubic", 0.1), ("forcing", 0.2)],
            "fe-beam" => &[
                ("f0", 100.0),
                ("beta1", 1.0e6),
                ("k2", 5.0e3),
                ("delta", 0.01),
                ("zeta", 0.02),
            ],
            _ => unreachable!(),
        };

        let mut params: BTreeMap<String, f64> = defaults
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        for (key, value) in overrides {
            if !params.contains_key(key) {
                return Err(Error::UnknownSystemParameter {
                    system: canonical.to_string(),
                    key: key.clone(),
                });
            }
            if !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "parameter {key} = {value} is not finite"
                )));
            }
            params.insert(key.clone(), *value);
        }

        let p = |key: &str| params[key];
        let mut assembly = None;

        let (system, smoothness, default_omega, amplitude_index) = match canonical {
            "vanderpol" => {
                let mu = p("mu");
                let sys = SystemModel::new(
                    canonical,
                    2,
                    true,
                    move |x, _, _| {
                        DVector::from_vec(vec![
                            x[1],
                            -x[0] - mu * (x[0] * x[0] - 1.0) * x[1],
                        ])
                    },
                    move |x, _, _| {
                        DMatrix::from_row_slice(
                            2,
                            2,
                            &[
                                0.0,
                                1.0,
                                -1.0 - 2.0 * mu * x[0] * x[1],
                                -mu * (x[0] * x[0] - 1.0),
                            ],
                        )
                    },
                );
                (sys, Smoothness::Smooth, 1.0, 0)
            }
            "duffing" => {
                let (c, g, f) = (p("damping"), p("cubic"), p("forcing"));
                let sys = SystemModel::new(
                    canonical,
                    2,
                    false,
                    move |x, tau, _| {
                        // forcing cos(omega t) locks to the response period
                        DVector::from_vec(vec![
                            x[1],
                            f * tau.cos() - c * x[1] - x[0] - g * x[0].powi(3),
                        ])
                    },
                    move |x, _, _| {
                        DMatrix::from_row_slice(
                            2,
                            2,
                            &[0.0, 1.0, -1.0 - 3.0 * g * x[0] * x[0], -c],
                        )
                    },
                );
                (sys, Smoothness::Smooth, 1.0, 0)
            }
            "quad-drag" => {
                let (c, d, f) = (p("damping"), p("drag"), p("forcing"));
                let sys = SystemModel::new(
                    canonical,
                    2,
                    false,
                    move |x, tau, omega| {
                        let t = tau / omega;
                        DVector::from_vec(vec![
                            x[1],
                            f * t.cos() - c * x[1] - x[0] - d * x[1] * x[1].abs(),
                        ])
                    },
                    move |x, _, _| {
                        DMatrix::from_row_slice(
                            2,
                            2,
                            &[0.0, 1.0, -1.0, -c - 2.0 * d * x[1].abs()],
                        )
                    },
                );
                (sys, Smoothness::C1, 1.0, 0)
            }
            "abs-spring" => {
                let (c, s, f) = (p("damping"), p("spring"), p("forcing"));
                let sys = SystemModel::new(
                    canonical,
                    2,
                    false,
                    move |x, tau, omega| {
                        let t = tau / omega;
                        DVector::from_vec(vec![
                            x[1],
                            f * t.cos() - c * x[1] - x[0] - s * x[0].abs(),
                        ])
                    },
                    move |x, _, _| {
                        DMatrix::from_row_slice(
                            2,
                            2,
                            &[0.0, 1.0, -1.0 - s * sgn(x[0]), -c],
                        )
                    },
                );
                (sys, Smoothness::C0, 1.0, 0)
            }
            "coulomb" => {
                let (c, mu_f, f) = (p("damping"), p("friction"), p("forcing"));
                let sys = SystemModel::new(
                    canonical,
                    2,
                    false,
                    move |x, tau, omega| {
                        let t = tau / omega;
                        DVector::from_vec(vec![
                            x[1],
                            f * t.cos() - c * x[1] - x[0] - mu_f * sgn(x[1]),
                        ])
                    },
                    // friction term has zero slope away from the switching
                    // surface; the surface itself is skipped
                    move |_, _, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -c]),
                );
                (sys, Smoothness::CMinus1, 1.0, 0)
            }
            "heaviside-piecewise" => {
                let (c, f) = (p("damping"), p("forcing"));
                let sys = SystemModel::new(
                    canonical,
                    2,
                    false,
                    move |x, tau, omega| {
                        let t = tau / omega;
                        let f_nl = if heaviside_switch(x[0], x[1]) >= 0.0 {
                            2.0 * x[1] + 10.0 * x[0]
                        } else {
                            0.0
                        };
                        DVector::from_vec(vec![
                            x[1],
                            f * (3.0 * t).cos() - c * x[1] - x[0] - f_nl,
                        ])
                    },
                    move |x, _, _| {
                        let on = heaviside_switch(x[0], x[1]) >= 0.0;
                        let (dx, dv) = if on { (10.0, 2.0) } else { (0.0, 0.0) };
                        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0 - dx, -c - dv])
                    },
                );
                (sys, Smoothness::CMinus1, 3.0, 0)
            }
            "square-wave" => {
                let (c, g, f) = (p("damping"), p("cubic"), p("forcing"));
                let sys = SystemModel::new(
                    canonical,
                    2,
                    false,
                    move |x, tau, omega| {
                        let t = tau / omega;
                        DVector::from_vec(vec![
                            x[1],
                            f * square_wave(t, 4.0 * PI) - c * x[1] - x[0] - g * x[0].powi(3),
                        ])
                    },
                    move |x, _, _| {
                        DMatrix::from_row_slice(
                            2,
                            2,
                            &[0.0, 1.0, -1.0 - 3.0 * g * x[0] * x[0], -c],
                        )
                    },
                );
                (sys, Smoothness::CMinus1Forcing, 0.5, 0)
            }
            "fe-beam" => {
                let asm = Arc::new(beam::assemble_fe_beam(p("zeta"))?);
                let (f0, beta1, k2, delta) = (p("f0"), p("beta1"), p("k2"), p("delta"));
                let n = beam::N_DOF;

                let m_lu = linalg::lu_factor(&asm.m)?;
                let ak = m_lu.solve_matrix(&asm.k);
                let ac = m_lu.solve_matrix(&asm.c);
                let mut e5 = DVector::zeros(n);
                e5[beam::NODE5_Y] = 1.0;
                let nl_col = m_lu.solve(&e5);
                let mut e10 = DVector::zeros(n);
                e10[beam::NODE10_Y] = f0;
                let ex_col = m_lu.solve(&e10);

                let (ak_j, ac_j, nl_j) = (ak.clone(), ac.clone(), nl_col.clone());
                let sys = SystemModel::new(
                    canonical,
                    beam::STATE_DIM,
                    false,
                    move |x, tau, _| {
                        let disp = x.rows(0, n);
                        let vel = x.rows(n, n);
                        let f_ns = beam::fe_nonlinear_force(x[beam::NODE5_Y], beta1, k2, delta);
                        let accel =
                            -&ak * disp - &ac * vel - &nl_col * f_ns + &ex_col * tau.sin();
                        let mut out = DVector::zeros(2 * n);
                        out.rows_mut(0, n).copy_from(&vel);
                        out.rows_mut(n, n).copy_from(&accel);
                        out
                    },
                    move |x, _, _| {
                        let slope =
                            beam::fe_nonlinear_slope(x[beam::NODE5_Y], beta1, k2, delta);
                        let mut jac = DMatrix::zeros(2 * n, 2 * n);
                        for i in 0..n {
                            jac[(i, n + i)] = 1.0;
                        }
                        let mut lower_left = -&ak_j;
                        lower_left.column_mut(beam::NODE5_Y).axpy(-slope, &nl_j, 1.0);
                        jac.view_mut((n, 0), (n, n)).copy_from(&lower_left);
                        jac.view_mut((n, n), (n, n)).copy_from(&(-&ac_j));
                        jac
                    },
                );
                assembly = Some(asm);
                (sys, Smoothness::CMinus1, 1.0, beam::NODE10_Y)
            }
            _ => unreachable!(),
        };

        Ok(Self {
            name: canonical,
            smoothness,
            params,
            default_omega,
            amplitude_index,
            system,
            assembly,
        })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn system(&self) -> &SystemModel {
        &self.system
    }

    pub fn default_omega(&self) -> f64 {
        self.default_omega
    }

    /// State component whose grid maximum is reported as "the amplitude".
    pub fn amplitude_index(&self) -> usize {
        self.amplitude_index
    }

    pub fn assembly(&self) -> Option<&beam::FeBeamAssembly> {
        self.assembly.as_deref()
    }

    fn p(&self, key: &str) -> f64 {
        self.params[key]
    }

    /// Approximate distance from a state to the nearest switching surface,
    /// infinite for systems that are smooth in the state.
    pub fn switching_distance(&self, x: &DVector<f64>) -> f64 {
        match self.name {
            "quad-drag" | "coulomb" => x[1].abs(),
            "abs-spring" => x[0].abs(),
            "heaviside-piecewise" => {
                let g = heaviside_switch(x[0], x[1]);
                let grad = if x[1] < 0.0 { 104.0f64.sqrt() } else { 10.0 };
                g.abs() / grad
            }
            "fe-beam" => (x[beam::NODE5_Y] + self.p("delta")).abs(),
            _ => f64::INFINITY,
        }
    }

    /// Initial trajectory for the solver at the given frequency. Forced
    /// entries use the response of their linearization, which for the
    /// square wave means summing its Fourier harmonics; the self-excited
    /// oscillator starts from a unit circle.
    pub fn initial_guess(&self, omega: f64, n_p: usize) -> Result<PeriodicTrajectory> {
        match self.name {
            "vanderpol" => PeriodicTrajectory::from_fn(omega, n_p, |tau| {
                DVector::from_vec(vec![tau.cos(), -omega * tau.sin()])
            }),
            "duffing" => {
                let (pc, qc) = sdof_harmonic_response(
                    1.0,
                    self.p("damping"),
                    self.p("forcing"),
                    0.0,
                    omega,
                );
                PeriodicTrajectory::from_fn(omega, n_p, |tau| {
                    DVector::from_vec(vec![
                        pc * tau.cos() + qc * tau.sin(),
                        omega * (-pc * tau.sin() + qc * tau.cos()),
                    ])
                })
            }
            "quad-drag" | "abs-spring" | "coulomb" => {
                let (pc, qc) = sdof_harmonic_response(
                    1.0,
                    self.p("damping"),
                    self.p("forcing"),
                    0.0,
                    1.0,
                );
                // fixed 1 rad/s forcing, phase tau/omega
                PeriodicTrajectory::from_fn(omega, n_p, |tau| {
                    let th = tau / omega;
                    DVector::from_vec(vec![
                        pc * th.cos() + qc * th.sin(),
                        -pc * th.sin() + qc * th.cos(),
                    ])
                })
            }
            "heaviside-piecewise" => {
                let (pc, qc) = sdof_harmonic_response(
                    1.0,
                    self.p("damping"),
                    self.p("forcing"),
                    0.0,
                    3.0,
                );
                PeriodicTrajectory::from_fn(omega, n_p, |tau| {
                    let th = 3.0 * tau / omega;
                    DVector::from_vec(vec![
                        pc * th.cos() + qc * th.sin(),
                        3.0 * (-pc * th.sin() + qc * th.cos()),
                    ])
                })
            }
            "square-wave" => {
                let (c, f) = (self.p("damping"), self.p("forcing"));
                let base = 2.0 * PI / (4.0 * PI); // fundamental of the T = 4*pi wave
                let mut modes = Vec::new();
                for k in (1..=127usize).step_by(2) {
                    let freq = k as f64 * base;
                    let (pc, qc) =
                        sdof_harmonic_response(1.0, c, 0.0, f * 2.0 / (k as f64 * PI), freq);
                    modes.push((freq, pc, qc));
                }
                let mean = 0.5 * f;
                PeriodicTrajectory::from_fn(omega, n_p, |tau| {
                    let t = tau / omega;
                    let mut x = mean;
                    let mut v = 0.0;
                    for &(freq, pc, qc) in &modes {
                        let th = freq * t;
                        x += pc * th.cos() + qc * th.sin();
                        v += freq * (-pc * th.sin() + qc * th.cos());
                    }
                    DVector::from_vec(vec![x, v])
                })
            }
            "fe-beam" => {
                let asm = self.assembly.as_ref().unwrap();
                let (s, cc) = beam::linear_beam_solution(asm, omega, self.p("f0"))?;
                let n = beam::N_DOF;
                PeriodicTrajectory::from_fn(omega, n_p, |tau| {
                    let mut out = DVector::zeros(2 * n);
                    out.rows_mut(0, n).copy_from(&(&s * tau.sin() + &cc * tau.cos()));
                    out.rows_mut(n, n)
                        .copy_from(&((&s * tau.cos() - &cc * tau.sin()) * omega));
                    out
                })
            }
            _ => unreachable!(),
        }
    }
}

impl std::fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark")
            .field("name", &self.name)
            .field("smoothness", &self.smoothness)
            .field("params", &self.params)
            .finish()
    }
}

/// Particular solution coefficients of x'' + c x' + k x = F cos(w t) +
/// G sin(w t), returned as (p, q) with x = p cos + q sin.
fn sdof_harmonic_response(k: f64, c: f64, f_cos: f64, f_sin: f64, w: f64) -> (f64, f64) {
    let a = k - w * w;
    let b = c * w;
    let det = a * a + b * b;
    ((a * f_cos - b * f_sin) / det, (b * f_cos + a * f_sin) / det)
}
