//! Message-passing recovery of the minimum-norm solution of `A x = y`.
//!
//! The crate covers random instance generation, the closed-form variance
//! schedule shared by all iterations, Gaussian belief propagation with its
//! linear message-passing (MP) and approximate message-passing (AMP)
//! reductions, brute-force chaos-expansion oracles, and a grid-based
//! density engine for non-Gaussian initialisations.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amp;
pub mod chaos;
pub mod density;
pub mod ensemble;
pub mod error;
pub mod gaussian_bp;
pub mod instance_io;
pub mod linalg;
pub mod schedule;
pub mod seed;

pub use ensemble::{EnsembleSpec, Family, OutcomeMode, ProblemInstance};
pub use error::{Error, Result};
pub use schedule::VarianceSchedule;
