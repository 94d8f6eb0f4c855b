//! Text-based speech editing core.
//!
//! Words are deleted, inserted or replaced in a recorded utterance by
//! regenerating only the modified stretch of its mel-spectrogram. A forward
//! and a backward autoregressive decoder run in *partial inference* mode
//! (original frames are fed back outside the edit) and their predictions are
//! fused at the frame where they disagree least.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! HTTP facade live in the `speechedit` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod acoustic;
pub mod dsp;
pub mod editing;
mod error;
pub mod evaluation;
pub mod frontend;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
