//! Files, configuration and command line around [`freetalk_core`].
//!
//! * [`audio`] reads and writes mono 16 kHz WAV (PCM16 or float32).
//! * [`patch_file`] stores trained identity patches as JSON.
//! * [`config`] parses TOML run configurations.
//! * [`report`] emits line-delimited JSON records.
//! * [`gradcheck`] checks analytic gradients by finite differences.
//! * [`cli`] wires it all into the `freetalk` binary.

#![forbid(unsafe_code)]

pub mod audio;
pub mod cli;
pub mod config;
mod error;
pub mod gradcheck;
pub mod patch_file;
pub mod report;

pub use error::{Error, Result};
pub use freetalk_core::{
    augment, dsp, embedder, identity, matrix, metrics, optim, rng, sample, synth, Waveform,
    SAMPLE_RATE,
};
