//! Core numerics for phase-space-reconstruction (PSR) load forecasting.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. It covers:
//!
//! - [`series`]: univariate series, chronological splits, z-score statistics
//! - [`chaos`]: delay estimation by mutual information, embedding dimension by
//!   false nearest neighbours, largest Lyapunov exponent (Wolf)
//! - [`embedding`]: trajectory matrices, patch matrices, supervised windows
//! - [`nnet`]: the global (Transformer encoder) / local (2D convolution)
//!   forecaster with hand-written reverse-mode gradients
//! - [`training`]: deterministic Adam training with early stopping
//! - [`evaluation`]: MAE/MAPE, reference baselines, the experiment grid
//! - [`interpret`]: attention capture and regression activation maps
//! - [`synth`]: synthetic chaotic load series
#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod chaos;
pub mod embedding;
mod error;
pub mod evaluation;
pub mod interpret;
pub(crate) mod math;
pub mod nnet;
pub mod series;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
