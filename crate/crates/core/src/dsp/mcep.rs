use alloc::vec::Vec;

use super::{MelSpectrogram, N_MELS};
use crate::{Error, Result};

/// Coefficients retained per frame (c1..c13; c0 is dropped).
pub const MCEP_ORDER: usize = 13;

/// T x 13 mel-cepstral coefficients, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MCEPSequence {
    data: Vec<f64>,
    n_frames: usize,
}

impl MCEPSequence {
    pub fn new(data: Vec<f64>, n_frames: usize) -> Result<Self> {
        if data.len() != n_frames * MCEP_ORDER {
            return Err(Error::shape("MCEP payload does not match frame count"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("MCEP sequence contains non-finite values"));
        }
        Ok(MCEPSequence { data, n_frames })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn is_empty(&self) -> bool {
        self.n_frames == 0
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * MCEP_ORDER..(t + 1) * MCEP_ORDER]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(MCEP_ORDER)
    }

    /// Frames `[start, end)`; may be empty.
    pub fn slice(&self, start: usize, end: usize) -> MCEPSequence {
        MCEPSequence {
            data: self.data[start * MCEP_ORDER..end * MCEP_ORDER].to_vec(),
            n_frames: end - start,
        }
    }

    pub fn concat(parts: &[&MCEPSequence]) -> MCEPSequence {
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        let n_frames = data.len() / MCEP_ORDER;
        MCEPSequence { data, n_frames }
    }
}

/// Orthonormal DCT-II basis rows k = 1..=13 over the 80 mel channels.
fn dct_basis() -> Vec<f64> {
    let n = N_MELS as f64;
    let scale = libm::sqrt(2.0 / n);
    let mut basis = Vec::with_capacity(MCEP_ORDER * N_MELS);
    for k in 1..=MCEP_ORDER {
        for i in 0..N_MELS {
            let arg = core::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n);
            basis.push(scale * libm::cos(arg));
        }
    }
    basis
}

/// Per-frame DCT-II of the log-mel vector, coefficients 1..=13.
pub fn mcep(mel: &MelSpectrogram) -> MCEPSequence {
    let basis = dct_basis();
    let mut data = Vec::with_capacity(mel.n_frames() * MCEP_ORDER);
    for frame in mel.frames() {
        for row in basis.chunks_exact(N_MELS) {
            data.push(row.iter().zip(frame).map(|(b, x)| b * x).sum());
        }
    }
    MCEPSequence { data, n_frames: mel.n_frames() }
}
