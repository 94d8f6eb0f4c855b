//! Std companion to `speechedit-core`: file formats, checkpoints, the toy
//! corpus, the training/editing/evaluation commands, the CLI and the HTTP
//! service.

pub mod audio;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corpus;
mod error;
mod fsutil;
pub mod melfile;
mod resample;
pub mod service;
pub mod toy;
pub mod vocoder;

pub use error::{Error, Result};
pub use resample::resample;
