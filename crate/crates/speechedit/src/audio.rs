//! 16-bit PCM mono WAV input and output.

use std::io::Cursor;
use std::path::Path;

use speechedit_core::dsp::{Waveform, SAMPLE_RATE};

use crate::fsutil::write_atomic;
use crate::{Error, Result};

fn spec() -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

/// Reads a mono WAV (integer or float samples). Other sample rates are
/// resampled to 22050 Hz on ingest.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::format(path, e))?;
    decode(reader, path)
}

pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| Error::format("<memory>", e))?;
    decode(reader, Path::new("<memory>"))
}

fn decode<R: std::io::Read>(mut reader: hound::WavReader<R>, path: &Path) -> Result<Waveform> {
    let s = reader.spec();
    if s.channels != 1 {
        return Err(Error::format(path, format!("{} channels; only mono audio is supported", s.channels)));
    }
    let samples: Vec<f64> = match s.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (s.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|x| x.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(path, e))?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|x| x.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, e))?,
    };
    if samples.is_empty() {
        return Err(Error::format(path, "no audio samples"));
    }
    let samples = if s.sample_rate == SAMPLE_RATE {
        samples
    } else {
        crate::resample::resample(&samples, s.sample_rate, SAMPLE_RATE)?
    };
    Ok(Waveform::from_unclamped(samples, SAMPLE_RATE)?)
}

/// Encodes as 16-bit PCM; samples are clipped to [-1, 1].
pub fn encode_wav(wave: &Waveform) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut buf, spec()).map_err(|e| Error::Internal(e.to_string()))?;
        for x in wave.samples() {
            let v = (x.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v).map_err(|e| Error::Internal(e.to_string()))?;
        }
        writer.finalize().map_err(|e| Error::Internal(e.to_string()))?;
    }
    Ok(buf.into_inner())
}

pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    write_atomic(path, &encode_wav(wave)?)
}
