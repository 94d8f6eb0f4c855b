//! Mel files: raw little-endian f32 `T x 80` payload (`.mel`) plus a JSON
//! sidecar (`.json`) with the framing parameters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speechedit_core::dsp::{MelSpectrogram, HOP_SAMPLES, N_MELS, SAMPLE_RATE};

use crate::fsutil::{read, read_json, write_atomic, write_json};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MelHeader {
    pub frames: usize,
    pub channels: usize,
    pub hop_samples: usize,
    pub sample_rate: u32,
}

pub fn sidecar_path(mel_path: &Path) -> PathBuf {
    mel_path.with_extension("json")
}

pub fn encode_mel(mel: &MelSpectrogram) -> Vec<u8> {
    mel.as_slice().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

pub fn decode_mel(bytes: &[u8], header: &MelHeader, path: &Path) -> Result<MelSpectrogram> {
    if header.channels != N_MELS || header.hop_samples != HOP_SAMPLES || header.sample_rate != SAMPLE_RATE {
        return Err(Error::format(
            path,
            format!(
                "unsupported framing: {} channels, hop {}, {} Hz",
                header.channels, header.hop_samples, header.sample_rate
            ),
        ));
    }
    if bytes.len() != header.frames * N_MELS * 4 {
        return Err(Error::format(path, format!("payload is {} bytes, header implies {}", bytes.len(), header.frames * N_MELS * 4)));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    MelSpectrogram::new(data, header.frames).map_err(|e| Error::format(path, e))
}

/// Writes `path` (payload) and its sidecar.
pub fn write_mel(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    write_atomic(path, &encode_mel(mel))?;
    let header = MelHeader { frames: mel.n_frames(), channels: N_MELS, hop_samples: HOP_SAMPLES, sample_rate: SAMPLE_RATE };
    write_json(&sidecar_path(path), &header)
}

pub fn read_mel(path: &Path) -> Result<MelSpectrogram> {
    let header: MelHeader = read_json(&sidecar_path(path))?;
    decode_mel(&read(path)?, &header, path)
}

/// Rounds every value through f32, matching what a write/read cycle yields.
pub fn quantize(mel: &MelSpectrogram) -> MelSpectrogram {
    let data = mel.as_slice().iter().map(|v| f64::from(*v as f32)).collect();
    MelSpectrogram::new(data, mel.n_frames()).expect("finite values stay finite")
}
