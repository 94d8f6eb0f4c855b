use alloc::vec;
use alloc::vec::Vec;

use super::fft::{Complex, Fft};
use super::{MelSpectrogram, Waveform, HOP_SAMPLES, LOG_FLOOR, MEL_FMAX, MEL_FMIN, N_FFT, N_MELS, WIN_SAMPLES};
use crate::Result;

const SLANEY_F_SP: f64 = 200.0 / 3.0;
const SLANEY_MIN_LOG_HZ: f64 = 1000.0;
const SLANEY_MIN_LOG_MEL: f64 = SLANEY_MIN_LOG_HZ / SLANEY_F_SP;

fn slaney_logstep() -> f64 {
    libm::log(6.4) / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= SLANEY_MIN_LOG_HZ {
        SLANEY_MIN_LOG_MEL + libm::log(hz / SLANEY_MIN_LOG_HZ) / slaney_logstep()
    } else {
        hz / SLANEY_F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= SLANEY_MIN_LOG_MEL {
        SLANEY_MIN_LOG_HZ * libm::exp(slaney_logstep() * (mel - SLANEY_MIN_LOG_MEL))
    } else {
        SLANEY_F_SP * mel
    }
}

/// One triangular band, stored sparsely from its first non-zero FFT bin.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilter {
    pub start_bin: usize,
    pub weights: Vec<f64>,
}

impl MelFilter {
    pub fn apply(&self, spectrum: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&spectrum[self.start_bin..])
            .map(|(w, s)| w * s)
            .sum()
    }
}

/// Area-normalized (Slaney) triangular filterbank over `n_fft / 2 + 1` bins.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Vec<MelFilter> {
    let n_bins = n_fft / 2 + 1;
    let bin_hz = |k: usize| k as f64 * sample_rate as f64 / n_fft as f64;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    (0..n_mels)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let enorm = 2.0 / (right - left);
            let dense: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let f = bin_hz(k);
                    let lower = (f - left) / (center - left);
                    let upper = (right - f) / (right - center);
                    lower.min(upper).max(0.0) * enorm
                })
                .collect();
            let first = dense.iter().position(|w| *w > 0.0).unwrap_or(0);
            let last = dense.iter().rposition(|w| *w > 0.0).map_or(first, |i| i + 1);
            MelFilter { start_bin: first, weights: dense[first..last].to_vec() }
        })
        .collect()
}

/// Numpy-style `reflect` index (edge sample not repeated).
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut r = i.rem_euclid(period);
    if r >= n as isize {
        r = period - r;
    }
    r as usize
}

/// Center-padded STFT with a periodic Hann window zero-padded to the FFT size.
#[derive(Clone, Debug)]
pub struct Stft {
    fft: Fft,
    window: Vec<f64>,
    hop: usize,
}

impl Default for Stft {
    fn default() -> Self {
        Stft::new(N_FFT, WIN_SAMPLES, HOP_SAMPLES)
    }
}

impl Stft {
    pub fn new(n_fft: usize, win_length: usize, hop: usize) -> Self {
        assert!(win_length <= n_fft && hop > 0);
        let offset = (n_fft - win_length) / 2;
        let mut window = vec![0.0; n_fft];
        for i in 0..win_length {
            window[offset + i] =
                0.5 - 0.5 * libm::cos(core::f64::consts::TAU * i as f64 / win_length as f64);
        }
        Stft { fft: Fft::new(n_fft), window, hop }
    }

    pub fn n_fft(&self) -> usize {
        self.fft.len()
    }

    pub fn n_bins(&self) -> usize {
        self.fft.len() / 2 + 1
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        1 + n_samples / self.hop
    }

    /// Complex half-spectra, one row of `n_bins` per frame.
    pub fn analyze(&self, samples: &[f64]) -> Vec<Vec<Complex>> {
        let n_fft = self.n_fft();
        let pad = (n_fft / 2) as isize;
        let mut buf = vec![Complex::ZERO; n_fft];
        (0..self.n_frames(samples.len()))
            .map(|t| {
                let start = (t * self.hop) as isize - pad;
                for (i, slot) in buf.iter_mut().enumerate() {
                    let x = samples[reflect_index(start + i as isize, samples.len())];
                    *slot = Complex::new(x * self.window[i], 0.0);
                }
                self.fft.forward(&mut buf);
                buf[..self.n_bins()].to_vec()
            })
            .collect()
    }

    /// Weighted overlap-add inverse. Output has `(T - 1) * hop` samples
    /// (at least one hop).
    pub fn synthesize(&self, spectra: &[Vec<Complex>]) -> Vec<f64> {
        let n_fft = self.n_fft();
        let n_frames = spectra.len();
        let out_len = n_frames.saturating_sub(1).max(1) * self.hop;
        let total = n_fft + self.hop * n_frames;
        let mut acc = vec![0.0; total];
        let mut wss = vec![0.0; total];
        let mut buf = vec![Complex::ZERO; n_fft];
        for (t, half) in spectra.iter().enumerate() {
            for k in 0..n_fft {
                buf[k] = if k < half.len() { half[k] } else { half[n_fft - k].conj() };
            }
            self.fft.inverse(&mut buf);
            let base = t * self.hop;
            for i in 0..n_fft {
                acc[base + i] += buf[i].re * self.window[i];
                wss[base + i] += self.window[i] * self.window[i];
            }
        }
        let pad = n_fft / 2;
        (pad..pad + out_len)
            .map(|i| if wss[i] > 1e-11 { acc[i] / wss[i] } else { acc[i] })
            .collect()
    }
}

/// STFT plus filterbank; reusable across utterances.
#[derive(Clone, Debug)]
pub struct MelAnalyzer {
    stft: Stft,
    filters: Vec<MelFilter>,
}

impl Default for MelAnalyzer {
    fn default() -> Self {
        MelAnalyzer {
            stft: Stft::default(),
            filters: mel_filterbank(super::SAMPLE_RATE, N_FFT, N_MELS, MEL_FMIN, MEL_FMAX),
        }
    }
}

impl MelAnalyzer {
    pub fn stft(&self) -> &Stft {
        &self.stft
    }

    pub fn filters(&self) -> &[MelFilter] {
        &self.filters
    }

    /// Linear-magnitude spectrum to log-mel frame.
    pub fn log_mel_frame(&self, magnitude: &[f64], out: &mut Vec<f64>) {
        out.extend(
            self.filters
                .iter()
                .map(|f| libm::log(f.apply(magnitude).max(LOG_FLOOR))),
        );
    }

    pub fn analyze(&self, wave: &Waveform) -> Result<MelSpectrogram> {
        let samples: Vec<f64> = wave.samples().iter().map(|&s| s as f64).collect();
        self.analyze_samples(&samples)
    }

    pub fn analyze_samples(&self, samples: &[f64]) -> Result<MelSpectrogram> {
        if samples.is_empty() {
            return Err(crate::Error::invalid("waveform is empty"));
        }
        let spectra = self.stft.analyze(samples);
        let n = spectra.len();
        let mut data = Vec::with_capacity(n * N_MELS);
        let mut mag = vec![0.0; self.stft.n_bins()];
        for row in &spectra {
            for (m, c) in mag.iter_mut().zip(row) {
                *m = c.norm();
            }
            self.log_mel_frame(&mag, &mut data);
        }
        MelSpectrogram::new(data, n)
    }
}

/// Log-mel spectrogram with the crate's fixed framing.
pub fn mel_spectrogram(wave: &Waveform) -> Result<MelSpectrogram> {
    MelAnalyzer::default().analyze(wave)
}
