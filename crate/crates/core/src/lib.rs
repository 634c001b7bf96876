//! Spectrogram-mask speech enhancement.

pub mod data;
pub mod dsp;
pub mod eval;
pub mod harness;
pub mod model;
pub mod nn;
pub mod stream;
mod error;

pub use error::{Error, Result};
