//! Matrix-free second-order optimizers for smooth nonconvex problems.
//!
//! The optimizers in this crate let a noisy negative-curvature step compete
//! with a plain gradient step. The accuracy demanded from the Lanczos
//! smallest-eigenvalue estimate is tied to the current gradient norm, so far
//! from first-order stationarity each iteration spends only a handful of
//! Hessian-vector products.
//!
//! Crate layout:
//!
//! * [`problem`]: problem oracles, smoothness constants, oracle-call
//!   accounting and the built-in problem registry.
//! * [`eigen`]: Lanczos smallest-eigenvalue estimation and a dense
//!   tridiagonal-QL eigen oracle used for certification.
//! * [`steps`]: the single-update NCG, inexact-Hessian and stochastic steps.
//! * [`solvers`]: GD, NCD, NCG-A1/A2, iH-NCG-A and SNCG drivers.
//! * [`accel`]: accelerated gradient machinery and NCG-B1/B2.
//! * [`harness`]: traces, reports, certification, sample sizes, sweeps and
//!   the command-line front end.

pub mod accel;
pub mod eigen;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod solvers;
pub mod steps;

pub use error::{Error, Result};
pub use problem::{Objective, Oracle, OracleCounters, Point, SmoothnessParams};
pub use rng::SeedStream;
pub use solvers::{SolveConfig, SolveReport};
