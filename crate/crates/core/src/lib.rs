//! Retention-based single-channel signal denoising.
//!
//! The crate is `no_std` (it needs `alloc`) and holds all of the numerical
//! machinery:
//!
//! * [`autodiff`]: a define-by-run reverse-mode tape over dense `f64` arrays,
//!   plus a central-difference gradient checker.
//! * [`model`]: patch embedding, multi-scale retention, DiR blocks and the
//!   end-to-end forward pass.
//! * [`data`]: SNR-controlled mixing, σ_y normalization, synthetic clean/EOG/EMG
//!   generators and train/test set construction.
//! * [`train`]: MSE loss, AdamW and the mini-batch epoch loop.
//! * [`metrics`]: temporal/spectral RRMSE, correlation and per-SNR reports.
//!
//! File formats and the command-line front end live in the `eegdir` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod data;
mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
