//! Splitting iterations for the indefinite least squares problem
//! `min (b - Ax)^T J (b - Ax)` with `J = diag(I_p, -I_q)`.
//!
//! The crate is organised bottom-up: dense and sparse kernels, the
//! partitioned problem and its normal equation, the SP/GSP/ADI/DS
//! iterations, spectral diagnostics for DS, and seeded instance generators.

pub mod error;
pub mod kernels;
pub mod model;
pub mod problems;
pub mod solvers;
pub mod spectral;

pub use error::{Error, Result};
pub use kernels::BlockMatrix;
pub use model::{assemble_normal, residual_res, NormalEquation, PartitionedProblem};
pub use solvers::{build_scheme, run, Method, RunOptions, SolveReport, SplittingScheme, Termination};
