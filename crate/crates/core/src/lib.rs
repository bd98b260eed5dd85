//! Potential theory laboratory for the rotationally invariant Lévy process
//! `X_t = B_{S_t}` whose subordinator `S` has Laplace exponent
//! `phi(λ) = λ/ln(1+λ) − 1`, the conjugate of the gamma subordinator.
//!
//! The crate is organized bottom-up:
//!
//! * [`exponents`]: closed forms for `phi`, `ln(1+λ)` and `Φ(ξ) = phi(|ξ|²)`.
//! * [`inversion`]: Talbot-contour Laplace inversion for the potential
//!   densities `u`, `v`, the jump tail `Λ` and the Lévy density `μ`.
//! * [`kernels`]: the radial Lévy density `j`, the Green function `g` and
//!   their asymptotic comparators.
//! * [`capacity`]: equilibrium measures and capacities of unions of balls.
//! * [`montecarlo`]: subordinator and path simulation, exit laws, killed
//!   Green functions, Poisson kernels and harmonic functions.
//! * [`experiments`]: end-to-end numerical checks with structured reports.
//!
//! Data-parallel work goes through [`exec::Execution`]; with the default
//! `parallel` feature it runs on rayon, otherwise sequentially. Results are
//! identical in both modes.

// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod exponents;
pub mod inversion;
pub mod kernels;
pub mod montecarlo;
pub mod quad;
pub mod report;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
pub use exec::Execution;
pub use table::LogGridTable;
