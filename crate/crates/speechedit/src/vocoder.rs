//! Vocoder selection: the in-crate Griffin-Lim reference or an external
//! command (for example a neural vocoder wrapper).

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};
use speechedit_core::dsp::{GriffinLim, MelSpectrogram, Vocoder, Waveform};

use crate::audio::read_wav;
use crate::melfile::write_mel;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VocoderChoice {
    GriffinLim {
        #[serde(default = "default_gl_iterations")]
        iterations: usize,
    },
    /// `command[0]` is run with the remaining arguments after replacing
    /// `{mel}` (input mel file, with JSON sidecar) and `{wav}` (output WAV).
    External { command: Vec<String> },
}

fn default_gl_iterations() -> usize {
    60
}

impl Default for VocoderChoice {
    fn default() -> Self {
        VocoderChoice::GriffinLim { iterations: default_gl_iterations() }
    }
}

impl VocoderChoice {
    pub fn build(&self) -> AnyVocoder {
        match self {
            VocoderChoice::GriffinLim { iterations } => AnyVocoder::GriffinLim(GriffinLim::new(*iterations)),
            VocoderChoice::External { command } => AnyVocoder::External(ExternalVocoder { command: command.clone() }),
        }
    }
}

/// A constructed vocoder.
#[derive(Clone, Debug)]
pub enum AnyVocoder {
    GriffinLim(GriffinLim),
    External(ExternalVocoder),
}

impl AnyVocoder {
    /// Like [`Vocoder::synthesize`] but keeps external failures distinct
    /// from input errors.
    pub fn vocode(&self, mel: &MelSpectrogram) -> crate::Result<Waveform> {
        match self {
            AnyVocoder::GriffinLim(gl) => Ok(gl.run(mel)?),
            AnyVocoder::External(ext) => {
                let dir = tempfile::tempdir().map_err(|e| crate::Error::Vocoder(format!("scratch dir: {e}")))?;
                ext.run(mel, dir.path())
            }
        }
    }
}

impl Vocoder for AnyVocoder {
    fn synthesize(&self, mel: &MelSpectrogram) -> speechedit_core::Result<Waveform> {
        match self {
            AnyVocoder::GriffinLim(gl) => gl.run(mel),
            AnyVocoder::External(ext) => ext.synthesize(mel),
        }
    }
}

/// Runs an external program per mel-spectrogram through temporary files.
#[derive(Clone, Debug)]
pub struct ExternalVocoder {
    pub command: Vec<String>,
}

impl ExternalVocoder {
    fn run(&self, mel: &MelSpectrogram, dir: &Path) -> crate::Result<Waveform> {
        let mel_path = dir.join("input.mel");
        let wav_path = dir.join("output.wav");
        write_mel(&mel_path, mel)?;
        let (program, args) = self.command.split_first().ok_or_else(|| crate::Error::Vocoder("empty command".into()))?;
        let args: Vec<String> = args
            .iter()
            .map(|a| a.replace("{mel}", &mel_path.to_string_lossy()).replace("{wav}", &wav_path.to_string_lossy()))
            .collect();
        let out = Command::new(program).args(&args).output().map_err(|e| crate::Error::Vocoder(format!("{program}: {e}")))?;
        if !out.status.success() {
            return Err(crate::Error::Vocoder(format!(
                "{program} exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        read_wav(&wav_path)
    }
}

impl Vocoder for ExternalVocoder {
    fn synthesize(&self, mel: &MelSpectrogram) -> speechedit_core::Result<Waveform> {
        let dir = tempfile::tempdir().map_err(|e| speechedit_core::Error::InvalidInput(format!("vocoder scratch dir: {e}")))?;
        self.run(mel, dir.path()).map_err(|e| speechedit_core::Error::InvalidInput(format!("external vocoder: {e}")))
    }
}
