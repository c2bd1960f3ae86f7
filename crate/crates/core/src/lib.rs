//! Adaptive multi-task optimization (AMTO) for neural network training.
//!
//! A gross training set is split `M` times into distinct train/validation
//! pairs. One model per pair trains concurrently; at every checkpoint each
//! task copies a peer's parameters into a temporary slave model chosen by
//! softmax over a learned relationship list, trains it alongside its own
//! master, and keeps it if it validates better. The final model is the one
//! with the highest harmonic accuracy across all validation sets.

pub mod data;
pub mod error;
pub mod nn;
pub mod orchestrator;
pub mod seed;
pub mod tasks;
pub mod transfer;

pub use error::{Error, Result};
