//! Decentralized wireless federated learning with differential privacy.
//!
//! Workers exchange perturbed model parameters over a simulated Gaussian
//! multiple-access channel. Transmit power is split between the parameter
//! and a Gaussian privacy mask so that every receiver obtains an aligned,
//! over-the-air sum of its peers' parameters. The crate provides the round
//! engine, the Gaussian-mechanism accountant, the convergence-bound
//! calculator, orthogonal and centralized baselines, and a CSV-emitting
//! experiment harness.

pub mod analysis;
pub mod channel;
pub mod engine;
pub mod error;
pub mod harness;
pub mod learn;
pub mod privacy;
pub mod streams;

pub use error::{Error, Result};
