//! Bistatic ISAC sensing with an OFDM frame and a pilot-only receiver:
//! frame generation, scene geometry, sample-level channel, delay-Doppler
//! periodogram, CP-block hypothesis detection and the experiment harness.

pub mod channel;
pub mod detector;
pub mod error;
pub mod harness;
pub mod receiver;
pub mod scene;
pub mod waveform;

pub use error::{Error, Result};

/// Propagation speed in m/s.
pub const SPEED_OF_LIGHT: f64 = 3e8;
