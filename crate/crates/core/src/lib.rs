//! Spectral-prosodic independence testing.
//!
//! The crate measures how much of a prosodic feature (log-energy, F0 or the
//! voicing bit) remains uncertain once the frame's quantized MFCC vector is
//! known, and asks whether that conditional entropy is lower than what a
//! shuffled pairing produces.
//!
//! Pipeline, per speaker:
//!
//! 1. [`dsp`] frames the waveform (20 ms, 50 % overlap at 20 kHz) and computes
//!    log-energy plus 13 MFCCs.
//! 2. [`prosody`] linearly interpolates glottal-closure F0 labels onto the frame
//!    grid and derives the voicing bit.
//! 3. [`quantize`] rounds energy and F0, and maps MFCC vectors to the index of
//!    the most probable component of a diagonal GMM trained with EM.
//! 4. [`entropy`] estimates `H(Y|X)` with the Chao-Shen estimator and turns it
//!    into an effective cardinality `2^H`.
//! 5. [`perm_test`] builds the null distribution from shuffled copies of the
//!    prosodic sequence and bounds the p-value.
//!
//! [`corpus`] ties these stages to files on disk.

#![forbid(unsafe_code)]

pub mod corpus;
pub mod dsp;
pub mod entropy;
mod error;
pub mod prosody;
pub mod quantize;

pub use error::{AudioErrorKind, Error, Result};
