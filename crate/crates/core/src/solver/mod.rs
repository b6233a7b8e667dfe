//! Mild solutions: stochastic and deterministic convolutions against the
//! kernel, computed by exact per-mode semigroup steps, and the Picard
//! iteration built on them.

mod coefficients;
mod field;
mod scheme;

pub use coefficients::{CoefficientClosure, CoefficientFn, Coefficients, SPOT_CHECK_SAMPLES};
pub use field::{Provenance, SolutionField};
pub use scheme::{
    deterministic_convolution, picard_solve, picard_step, solve, stochastic_convolution, zero_field, PicardOutcome,
    Scheme, SolverOptions, DEFAULT_MAX_ITER,
};
