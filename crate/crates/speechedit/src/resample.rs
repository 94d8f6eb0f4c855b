//! Ingest-time sample-rate conversion.

use rubato::audioadapter_buffers::direct::InterleavedSlice;
use rubato::audioadapter::Adapter;
use rubato::{Fft, FixedSync, Resampler};

use crate::{Error, Result};

/// Band-limited resampling of a mono clip; output length is
/// `round(len * to / from)`.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Result<Vec<f64>> {
    if from == to {
        return Ok(samples.to_vec());
    }
    let mut resampler = Fft::<f64>::new(from as usize, to as usize, 1024, 1, FixedSync::Both)
        .map_err(|e| Error::Internal(format!("resampler {from} -> {to} Hz: {e}")))?;
    let input = InterleavedSlice::new(samples, 1, samples.len()).map_err(|e| Error::Internal(e.to_string()))?;
    let out = resampler
        .process_all(&input, samples.len(), None)
        .map_err(|e| Error::Internal(format!("resampling failed: {e}")))?;
    Ok((0..out.frames()).map(|i| out.read_sample(0, i).unwrap_or(0.0)).collect())
}
