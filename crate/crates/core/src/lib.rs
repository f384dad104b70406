//! Software model of an eight-channel wireless sEMG acquisition chain.
//!
//! Signals flow from a [`device`] simulator (sources, RC band-pass, 24-bit
//! ADC, 10-bit window encoder, paced transport) to a [`host`] that recovers
//! frame boundaries, decodes to volts, optionally notches mains and records
//! to CSV. [`analysis`] holds the validation metrics and experiments.

pub mod analysis;
pub mod cli;
pub mod codec;
pub mod device;
pub mod error;
pub mod host;
pub mod pipeline;
pub mod signal_chain;
pub mod transport;

pub use error::{Error, Result};
