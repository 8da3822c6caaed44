//! Simulation and identification of radio emitters from hardware-induced
//! waveform distortions captured by a multi-antenna receiver.

pub mod analysis;
pub mod classifier;
pub mod emitter;
pub mod error;
pub mod experiment;
pub mod features;
pub mod frontend;
pub mod schemes;
pub mod signal;

pub use error::{Error, Result};
