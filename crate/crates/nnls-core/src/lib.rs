//! Non-negative least squares via overparametrized gradient descent.
//!
//! Solves `min_{z >= 0} ||Az - y||^2` without explicit constraints by
//! running vanilla gradient descent on the factorized loss
//! `L(x) = 1/2 ||A x^{.L} - y||^2`, where `x^{.L}` is the entrywise
//! L-th power. The product iterate converges to an NNLS solution, and a
//! small positive initialization additionally biases the limit towards
//! small l1-norm.
//!
//! The crate bundles:
//! - [`linalg`]: dense row-major matrices and Hadamard calculus,
//! - [`objective`]: losses, gradients, Bregman divergences, KKT residuals,
//! - [`solvers`]: factorized (S)GD, an RK4 integrator for the exact flow,
//!   projected gradient descent, and a Lawson-Hanson active-set reference,
//! - [`problem`]: seeded instance generation and a text file format,
//! - [`experiments`]: a declarative harness emitting CSV result tables.

pub mod error;
pub mod experiments;
pub mod linalg;
pub mod objective;
pub mod problem;
pub mod solvers;
mod textdoc;

pub use error::{NnlsError, Result};
pub use linalg::{DenseMatrix, SpectralEstimate};
pub use objective::KktReport;
pub use problem::NnlsProblem;
pub use solvers::{SolveReport, SolverConfig, StepRule, StopReason, TracePoint};
