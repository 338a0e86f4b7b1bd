//! Log-concave sampling and normalizing-constant estimation.
//!
//! The crate is organised around the pieces of a sampling pipeline:
//!
//! - [`oracle`]: target functions, exact and noisy oracles, benchmark and
//!   hard instances.
//! - [`langevin`]: underdamped Langevin integrators (plain and randomized
//!   midpoint) driven by exact Gaussian increments or a shared Brownian path.
//! - [`mala`]: one-leapfrog Metropolized HMC, its mixing wrapper and warmness.
//! - [`anneal`]: variance schedules, ratio payoffs and the telescoping
//!   estimator of `Z = ∫ exp(-f)`.
//! - [`mlmc`]: multilevel Monte Carlo over coupled Langevin discretizations.
//! - [`qwalk`]: finite-grid Markov chains, discriminant matrices and the
//!   spectrum of the associated Szegedy walk.
//! - [`ledger`]: oracle-call accounting and leading-order cost predictions.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anneal;
pub mod error;
pub mod langevin;
pub mod ledger;
pub mod mala;
pub mod mlmc;
pub mod oracle;
pub mod quadrature;
pub mod qwalk;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use oracle::{FunctionInstance, Potential};
