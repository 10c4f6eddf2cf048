//! Space–time Petrov–Galerkin splines for the 1D wave equation, with an
//! exponential weight in time.

pub mod analysis;
pub mod config;
pub mod driver;
pub mod dump;
pub mod error;
pub mod expr;
pub mod forms;
pub mod linalg;
pub mod newton;
pub mod problems;
pub mod quadrature;
pub mod splines;
pub mod system;

pub use error::{Error, Result};
