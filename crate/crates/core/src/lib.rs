//! Fourier-grid vibronic solvers for one-dimensional molecular models and
//! the electron-nuclear entanglement analysis built on top of them.
//!
//! The crate covers the full chain: grid Hamiltonians ([`grid`]), model
//! potentials ([`potentials`]), Born-Oppenheimer scans and nuclear solves
//! ([`bo`]), Schmidt decomposition and entropies ([`schmidt`]), rotation-based
//! diabatization and non-adiabatic couplings ([`diabatic`]), the coupled
//! Born-Huang vibronic problem ([`born_huang`]) and a config-driven
//! [`pipeline`] that writes reproducible CSV outputs.

pub mod bo;
pub mod born_huang;
pub mod diabatic;
pub mod error;
pub mod grid;
pub mod parallel;
pub mod pipeline;
pub mod potentials;
pub mod schmidt;

#[cfg(test)]
mod proptests;

pub use error::{Error, Result};

/// Dense column-major matrix used throughout the crate.
pub type Matrix = faer::Mat<f64>;
