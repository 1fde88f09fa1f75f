//! Periodic solutions of forced and autonomous nonlinear systems.
//!
//! The solver iterates on a whole candidate trajectory at once: the residual
//! of the governing equations is linearized around the current guess, the
//! resulting linear periodic boundary value problem is solved with
//! piecewise-constant interval operators, and the correction is applied to
//! every grid node together with a frequency update. Forced and autonomous
//! systems share the machinery; they differ only in the scalar phase
//! condition that closes the boundary system.
//!
//! The crate also carries the surrounding apparatus needed to trust the
//! solver: shooting and harmonic balance references, a catalog of benchmark
//! systems (smooth through discontinuous), convergence study helpers, and
//! pseudo-arclength continuation with Floquet stability.

pub mod benchmarks;
pub mod continuation;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod reference;
pub mod solver;
pub mod system;

pub use error::{Error, Result};
pub use system::{PeriodicTrajectory, SystemModel};
