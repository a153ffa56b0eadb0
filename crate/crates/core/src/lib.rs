//! Music auto-tagging benchmark toolkit.
//!
//! Audio I/O and resampling ([`audio`]), the spectrogram front ends
//! ([`dsp`]), test-time deformations ([`deform`]), manifests and the
//! synthetic corpus ([`datasets`]), the architecture zoo ([`models`]),
//! training and evaluation ([`train`], [`metrics`], [`report`]).

pub mod audio;
pub mod baselines;
pub mod datasets;
pub mod deform;
pub mod dsp;
mod error;
pub mod metrics;
pub mod models;
pub mod report;
pub mod train;

pub use audio::AudioClip;
pub use error::{Error, Result};

/// Sample rate every model consumes.
pub const SAMPLE_RATE: u32 = 16_000;
/// Tag vocabulary size.
pub const N_TAGS: usize = 50;
