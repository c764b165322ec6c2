//! Diagonal dual descent for linear inverse problems.
//!
//! The method runs forward-backward splitting on the Fenchel dual of a
//! Tikhonov-penalized problem while the penalty parameter `λ_n` is driven to
//! zero. The iteration count then acts as the regularization parameter: with
//! exact data the primal iterates converge to the minimal-`R` solution of
//! `Ax = y`, with noisy data they must be stopped early.
//!
//! Module map:
//!
//! * [`convex`]: extended reals, scalar proxes, conjugates, conditioning moduli.
//! * [`tensor`], [`ops`], [`pgm`]: data containers, linear operators, image I/O.
//! * [`datafit`], [`regularizer`]: the two halves of the variational model.
//! * [`solver`]: the iteration itself, λ-schedules and run traces.
//! * [`perturbation`], [`stopping`], [`diagnostics`]: noise, stopping rules and
//!   numerical checks of the convergence and stability estimates.
//! * [`harness`]: experiment configuration and orchestration behind the CLI.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod datafit;
pub mod diagnostics;
mod error;
pub mod harness;
pub mod ops;
pub mod perturbation;
pub mod pgm;
pub mod regularizer;
pub mod rng;
pub mod solver;
pub mod stopping;
pub mod tensor;

pub use convex::{ConditioningModulus, ExtReal};
pub use datafit::{DataFit, LossKind};
pub use error::{Error, Result};
pub use ops::{BoundedOperator, LinearOperator};
pub use regularizer::Regularizer;
pub use solver::{RunTrace, Schedule, Solver, SolverState, TraceRecord};
pub use tensor::Tensor;
