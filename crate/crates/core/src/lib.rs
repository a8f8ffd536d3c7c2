//! Quantum-jump Monte Carlo simulation of switching-current statistics in
//! a current-biased Josephson junction, optionally coupled to a two-level
//! system, with a Lindblad master-equation reference.

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod hamiltonian;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod physics;
pub mod quadrature;

pub use error::{Error, Result};
