//! Cahn-Hilliard dynamics with singular potentials and dynamic boundary
//! conditions on the interval and the periodic strip.

pub mod config;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod experiments;
pub mod potentials;
pub mod solver;
pub mod stationary;

pub use error::{Error, Result};
