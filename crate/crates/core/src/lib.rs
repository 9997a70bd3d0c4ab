//! Symbol-level precoding for faster-than-Nyquist ISAC downlinks.

pub mod baseline;
pub mod channel;
pub mod config;
pub mod conic;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod precoder;
pub mod sca;
pub mod units;
pub mod waveform;

pub use error::{Error, Result};
