//! Exact k-sparse binary regression.
//!
//! The crate covers the planted model `Y = Xβ* + W` with a binary, k-sparse
//! `β*`, the pure-noise variant where `Y` is independent of `X`, exhaustive
//! solvers for the (overlap-restricted) least-squares problem, the limiting
//! curve `Γ` with its sample-size thresholds, the conditional moment kernels
//! of the solution count, and seeded Monte Carlo harnesses that turn the
//! asymptotic statements into desk-scale checks.
//!
//! All logarithms are natural logarithms.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod moments;
pub mod solver;
pub mod special;
pub mod theory;

pub use error::{Error, Result};
pub use model::{generate_instance, generate_pure_noise, Instance, ModelParams};
pub use solver::{
    lasso_baseline, objective_of, overlap_profile, solve_exact, solve_pure_noise,
    solve_restricted, LassoResult, NormMode, OverlapProfile, SolveResult, SolverConfig,
};
pub use theory::{Regime, ThresholdReport};
