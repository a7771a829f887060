//! Sparse-plus-smooth image reconstruction from partial Fourier measurements.
//!
//! The image is modelled as `x1 + x2`, a sparse spike field plus a smooth
//! background, penalised by `λ1‖x1‖₁ + (λ2/2)‖Δx2‖²`. Two drivers are
//! provided: an accelerated proximal gradient method on the joint problem
//! ([`solvers::solve_coupled`]) and a weighted LASSO on `x1` alone followed by
//! a closed-form `x2` ([`solvers::solve_decoupled`]).

pub mod cli;
pub mod error;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod par;
pub mod reference;
pub mod representer;
pub mod simulate;
pub mod solvers;
pub mod tuning;

pub use error::{Error, Result};
