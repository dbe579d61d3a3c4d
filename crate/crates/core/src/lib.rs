//! Randomized quantum neural network ansatz over fragmented Hilbert spaces.
//!
//! The crate is organised bottom-up: [`linalg`] is the dense complex kernel,
//! [`algebra`] splits a Hilbert space into sectors of a generated algebra,
//! [`model`] builds the Temperley-Lieb system and datasets, [`qnn`] evaluates
//! the ansatz with its derivatives, [`trainer`] runs gradient descent sweeps
//! and [`theory`] holds the Monte-Carlo verifiers.

pub mod algebra;
pub mod error;
pub mod linalg;
pub mod model;
pub mod qnn;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
