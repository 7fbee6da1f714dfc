//! Position-dependent feedforward for a timing-belt pulley drive.
//!
//! The crate simulates a belt drive whose stiffness varies with carriage
//! position, generates rest-to-rest references, and learns the feedforward
//! parameter functions θ₁(ρ), θ₂(ρ) with kernel-regularized least squares.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod kernel;
pub mod learning;
pub mod pipeline;
pub mod plant;
pub mod trajectory;

pub use error::{Error, Result};
