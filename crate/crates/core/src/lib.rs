//! Audio-visual time-frequency mask estimation for speech separation.
//!
//! The crate covers the whole pipeline: mixture synthesis and ingestion
//! ([`data`]), STFT analysis and overlap-add resynthesis ([`dsp`]), the ideal
//! binary mask ([`maskcore`]), a small from-scratch training core ([`nn`]),
//! the audio-only / visual-only / audio-visual mask networks ([`models`]),
//! and objective evaluation ([`eval`]).

#[cfg(test)]
#[macro_use]
mod testutil;

pub mod cli;
pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod kvfile;
pub mod maskcore;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
