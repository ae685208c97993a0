//! Denoising-autoencoder driver assistance.
//!
//! A 2D canyon simulator produces skilled driving data, a skip-connected LSTM
//! denoising autoencoder learns to reconstruct skilled control inputs from
//! noise-corrupted ones, and an assistance pipeline blends the reconstruction
//! with the live driver input at 10 Hz.

pub mod dae;
pub mod dataset;
pub mod drivers;
pub mod error;
pub mod evaluator;
pub mod preprocess;
pub mod scalar;
pub mod service;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision model parameters (training, verification).
pub type ModelParams64 = dae::ModelParams<f64>;
/// Single-precision model parameters (serving).
pub type ModelParams32 = dae::ModelParams<f32>;
