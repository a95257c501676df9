//! Recurrent networks that reuse a small set of hidden layers over many time
//! steps, trained with hand-written backpropagation through time.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense vectors and matrices, activations and a seeded RNG.
//! - [`oscillator`]: the Euler-integrated oscillator activation.
//! - [`model`]: parameters, slot schedules, the forward pass and checkpoints.
//! - [`bptt`]: the reverse pass and batch gradients.
//! - [`train`]: loss, Adam, initialization, dropout and the epoch loop.
//! - [`data`]: image and text datasets, augmentation and splits.
//! - [`harness`]: experiment configs, sweeps, metrics files and generation.

pub mod bptt;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oscillator;
pub mod train;

pub use error::{Error, Result};
