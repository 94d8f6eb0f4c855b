use alloc::vec;
use alloc::vec::Vec;

use super::fft::Complex;
use super::{MelAnalyzer, MelSpectrogram, Vocoder, Waveform, N_MELS, SAMPLE_RATE};
use crate::{Error, Result};

/// Griffin-Lim phase recovery behind the [`Vocoder`] trait.
#[derive(Clone, Debug)]
pub struct GriffinLim {
    analyzer: MelAnalyzer,
    /// Non-negative pseudo-inverse rows: one 80-vector per FFT bin.
    pinv: Vec<f64>,
    pub iterations: usize,
}

impl Default for GriffinLim {
    fn default() -> Self {
        GriffinLim::new(60)
    }
}

impl GriffinLim {
    pub fn new(iterations: usize) -> Self {
        let analyzer = MelAnalyzer::default();
        let pinv = filterbank_pinv(&analyzer);
        GriffinLim { analyzer, pinv, iterations }
    }

    /// Linear magnitudes (T x bins) recovered from log-mel.
    pub fn linear_magnitudes(&self, mel: &MelSpectrogram) -> Vec<Vec<f64>> {
        let n_bins = self.analyzer.stft().n_bins();
        mel.frames()
            .map(|frame| {
                let energy: Vec<f64> = frame.iter().map(|v| libm::exp(*v)).collect();
                (0..n_bins)
                    .map(|k| {
                        let row = &self.pinv[k * N_MELS..(k + 1) * N_MELS];
                        row.iter().zip(&energy).map(|(p, e)| p * e).sum::<f64>().max(0.0)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn run(&self, mel: &MelSpectrogram) -> Result<Waveform> {
        if self.iterations < 1 {
            return Err(Error::invalid("Griffin-Lim needs at least one iteration"));
        }
        let stft = self.analyzer.stft();
        let mags = self.linear_magnitudes(mel);
        // Zero-phase start keeps the output deterministic.
        let mut spectra: Vec<Vec<Complex>> = mags
            .iter()
            .map(|row| row.iter().map(|m| Complex::new(*m, 0.0)).collect())
            .collect();
        for _ in 0..self.iterations {
            let signal = stft.synthesize(&spectra);
            let rebuilt = stft.analyze(&signal);
            for ((target, mag), est) in spectra.iter_mut().zip(&mags).zip(&rebuilt) {
                for (k, slot) in target.iter_mut().enumerate() {
                    let phase = match est.get(k) {
                        Some(c) if c.norm() > 1e-16 => c.scale(1.0 / c.norm()),
                        _ => Complex::ONE,
                    };
                    *slot = phase.scale(mag[k]);
                }
            }
        }
        Waveform::from_unclamped(stft.synthesize(&spectra), SAMPLE_RATE)
    }
}

impl Vocoder for GriffinLim {
    fn synthesize(&self, mel: &MelSpectrogram) -> Result<Waveform> {
        self.run(mel)
    }
}

/// Reference vocoder entry point.
pub fn griffin_lim(mel: &MelSpectrogram, iterations: usize) -> Result<Waveform> {
    if iterations < 1 {
        return Err(Error::invalid("Griffin-Lim needs at least one iteration"));
    }
    GriffinLim::new(iterations).run(mel)
}

/// M^T (M M^T)^-1 for the 80 x bins filterbank M, stored bins x 80.
fn filterbank_pinv(analyzer: &MelAnalyzer) -> Vec<f64> {
    let n_bins = analyzer.stft().n_bins();
    let mut dense = vec![0.0; N_MELS * n_bins];
    for (m, f) in analyzer.filters().iter().enumerate() {
        for (i, w) in f.weights.iter().enumerate() {
            dense[m * n_bins + f.start_bin + i] = *w;
        }
    }
    let mut gram = vec![0.0; N_MELS * N_MELS];
    for a in 0..N_MELS {
        for b in 0..N_MELS {
            gram[a * N_MELS + b] = (0..n_bins)
                .map(|k| dense[a * n_bins + k] * dense[b * n_bins + k])
                .sum();
        }
    }
    let inv = invert(gram, N_MELS);
    let mut pinv = vec![0.0; n_bins * N_MELS];
    for k in 0..n_bins {
        for m in 0..N_MELS {
            pinv[k * N_MELS + m] = (0..N_MELS).map(|j| dense[j * n_bins + k] * inv[j * N_MELS + m]).sum();
        }
    }
    pinv
}

/// Gauss-Jordan inverse with partial pivoting. The mel Gram matrix is
/// symmetric positive definite, so pivots never vanish.
fn invert(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().partial_cmp(&a[y * n + col].abs()).unwrap())
            .unwrap();
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
        }
        let d = a[col * n + col];
        for j in 0..n {
            a[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = a[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        a[r * n + j] -= f * a[col * n + j];
                        inv[r * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    inv
}
