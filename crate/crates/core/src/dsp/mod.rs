//! Signal processing: framing, STFT, mel filterbank, MCEP and the Griffin-Lim
//! reference vocoder.
//!
//! Framing is fixed: 22050 Hz audio, hop 275 samples (12.5 ms rounded down),
//! Hann window of 1102 samples (50 ms) zero-padded to a 2048-point FFT,
//! reflect center padding, 80 Slaney mel bands over 0..8000 Hz, natural-log
//! compression with a 1e-5 floor.

mod fft;
mod griffin_lim;
mod mcep;
mod mel;

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

pub use fft::{Complex, Fft};
pub use griffin_lim::{griffin_lim, GriffinLim};
pub use mcep::{mcep, MCEPSequence, MCEP_ORDER};
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelAnalyzer, MelFilter, Stft};

pub const SAMPLE_RATE: u32 = 22050;
pub const HOP_SAMPLES: usize = 275;
pub const WIN_SAMPLES: usize = 1102;
pub const N_FFT: usize = 2048;
pub const N_MELS: usize = 80;
pub const MEL_FMIN: f64 = 0.0;
pub const MEL_FMAX: f64 = 8000.0;
pub const LOG_FLOOR: f64 = 1e-5;

/// Mono audio. Samples are finite and within [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("waveform is empty"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::invalid(format!(
                "sample {i} is {} (must be finite and within [-1, 1])",
                samples[i]
            )));
        }
        Ok(Waveform { samples, sample_rate })
    }

    /// Clamps to [-1, 1] and maps non-finite values to zero.
    pub fn from_unclamped(samples: impl IntoIterator<Item = f64>, sample_rate: u32) -> Result<Self> {
        let samples = samples
            .into_iter()
            .map(|s| if s.is_finite() { s.clamp(-1.0, 1.0) as f32 } else { 0.0 })
            .collect();
        Waveform::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn max_abs(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }
}

/// T x 80 log-mel matrix, row-major. Frame `t` (0-based) is `frame(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f64>,
    n_frames: usize,
}

impl MelSpectrogram {
    pub fn new(data: Vec<f64>, n_frames: usize) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::invalid("mel spectrogram needs at least one frame"));
        }
        if data.len() != n_frames * N_MELS {
            return Err(Error::shape(format!(
                "mel payload has {} values, expected {} x {N_MELS}",
                data.len(),
                n_frames
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mel spectrogram contains non-finite values"));
        }
        Ok(MelSpectrogram { data, n_frames })
    }

    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut data = Vec::new();
        let mut n = 0;
        for f in frames {
            if f.len() != N_MELS {
                return Err(Error::shape(format!("frame has {} channels, expected {N_MELS}", f.len())));
            }
            data.extend_from_slice(f);
            n += 1;
        }
        MelSpectrogram::new(data, n)
    }

    /// Every cell at `log(LOG_FLOOR)`.
    pub fn silence(n_frames: usize) -> Result<Self> {
        MelSpectrogram::new(alloc::vec![libm::log(LOG_FLOOR); n_frames * N_MELS], n_frames)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_channels(&self) -> usize {
        N_MELS
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * N_MELS..(t + 1) * N_MELS]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(N_MELS)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Frames `[start, end)` as a new spectrogram.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_frames {
            return Err(Error::invalid(format!(
                "frame slice [{start}, {end}) invalid for {} frames",
                self.n_frames
            )));
        }
        MelSpectrogram::new(self.data[start * N_MELS..end * N_MELS].to_vec(), end - start)
    }
}

/// Mel-to-waveform capability. Griffin-Lim is the in-crate implementation;
/// neural vocoders plug in behind the same trait.
pub trait Vocoder {
    fn synthesize(&self, mel: &MelSpectrogram) -> Result<Waveform>;
}

/// Number of frames produced for `n_samples` under center padding.
pub fn frame_count(n_samples: usize) -> usize {
    1 + n_samples / HOP_SAMPLES
}
