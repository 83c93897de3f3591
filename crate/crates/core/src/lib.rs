//! Frequency-domain protection of recorded speech against voice cloning.
//!
//! The crate optimizes complex STFT perturbations that push a speaker
//! embedding away from its clean value. Two drivers are provided:
//!
//! * [`sample`] optimizes a perturbation for one utterance.
//! * [`identity`] trains a universal `F x l` patch per speaker that can be
//!   tiled frame-wise over audio of any length.
//!
//! Everything here is `no_std` + `alloc`. File formats, configuration and
//! the command line live in the `freetalk` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod augment;
pub mod dsp;
pub mod embedder;
mod error;
pub mod fft;
pub mod identity;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod sample;
pub mod synth;
mod waveform;

pub use error::{Error, Result};
pub use waveform::{Waveform, SAMPLE_RATE};
