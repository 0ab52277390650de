//! Difference-in-differences estimation for fixed-T panels whose untreated
//! outcomes follow an interactive fixed-effects model.
//!
//! The estimator proxies the unobserved common factors by cross-sectional
//! averages of the never-treated units' observables, fits slopes and
//! loadings on the pre-treatment window, imputes untreated covariates and
//! outcomes for the treated, and reports group-time ATTs split into a direct
//! part and an indirect part channelled through the covariates.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the parallel
//! replication runner and the command-line front end live in the `c2ed2`
//! crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod cce;
mod error;
pub mod montecarlo;
pub mod numerics;
pub mod panel;

pub use error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;
