use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Solver routines report structured failures so that
/// callers (notably the CLI and the continuation driver) can distinguish
/// usage errors from numerical breakdowns.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerically singular matrix at pivot {pivot_index}")]
    Singular { pivot_index: usize },

    #[error("eigenvalue iteration did not converge within {sweeps} QR sweeps")]
    EigenIterationLimit { sweeps: usize },

    #[error("grid too coarse: n_p = {n_p}, need at least {min}")]
    GridTooCoarse { n_p: usize, min: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown system '{0}'")]
    UnknownSystem(String),

    #[error("unknown parameter '{key}' for system '{system}'")]
    UnknownSystemParameter { system: String, key: String },

    #[error("degenerate phase condition: |x'(0)| = {norm:.3e}")]
    DegeneratePhase { norm: f64 },

    #[error("singular boundary system in iteration {iteration} (pivot {pivot_index})")]
    SingularBoundary { iteration: usize, pivot_index: usize },

    #[error("correction propagation closure mismatch {mismatch:.3e} exceeds {tol:.3e}")]
    PropagationMismatch { mismatch: f64, tol: f64 },

    #[error("no convergence after {iterations} iterations (e_a = {e_a:.3e})")]
    NoConvergence { iterations: usize, e_a: f64 },

    #[error("trajectory blew up at step {step} (t = {t:.6})")]
    BlowUp { step: usize, t: f64 },

    #[error("Newton iteration stalled after {iterations} iterations, residual {residual:.3e}")]
    NewtonStalled { iterations: usize, residual: f64 },

    #[error("steady state not reached after {periods} periods (period-map displacement {displacement:.3e})")]
    NotSettled { periods: usize, displacement: f64 },
}
