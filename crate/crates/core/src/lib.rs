//! Simulation and verification toolkit for the lattice Gaussian free field
//! with delta-pinning.

pub mod error;
pub mod green;
pub mod kernel;
pub mod lattice;
pub mod mc;
pub mod pinning;
pub mod renewal;
pub mod scaling;

pub use error::{Error, ErrorClass, Result};
