//! Spiking model of primary visual cortex trained on natural scenes, with a
//! linear readout of its responses to handwritten digits.

pub mod codec;
pub mod config;
pub mod encoding;
pub mod error;
pub mod features;
pub mod images;
pub mod mnist;
pub mod network;
pub mod neuron;
pub mod plasticity;
pub mod readout;
pub mod rf;
pub mod rng;
pub mod snapshot;
pub mod svm;

pub use error::{Error, Result};
