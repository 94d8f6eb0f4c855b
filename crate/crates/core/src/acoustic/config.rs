use alloc::format;

use serde::{Deserialize, Serialize};

use crate::dsp::N_MELS;
use crate::frontend::INVENTORY;
use crate::{Error, Result};

/// Network widths. Defaults are the full-size configuration; `scale_factor`
/// shrinks every width (not kernel sizes, layer counts or the 80 mel
/// channels) for desk-scale runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub text_embed_dim: usize,
    pub conv_layers: usize,
    pub conv_kernel: usize,
    pub conv_channels: usize,
    /// Total width of the bidirectional text LSTM (both directions).
    pub encoder_recurrent_dim: usize,
    pub speaker_embed_dim: usize,
    pub prenet_dims: [usize; 2],
    pub decoder_recurrent_dim: usize,
    pub output_dim: usize,
    /// Total width of each bidirectional duration LSTM layer.
    pub duration_recurrent_dim: usize,
    pub duration_layers: usize,
    pub prenet_dropout: f64,
    /// Feed the duration predictor from the (detached) acoustic text encoder
    /// instead of its own phone embedding.
    pub shared_encoder: bool,
    pub n_phones: usize,
    pub n_speakers: usize,
    pub scale_factor: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            text_embed_dim: 512,
            conv_layers: 3,
            conv_kernel: 5,
            conv_channels: 512,
            encoder_recurrent_dim: 512,
            speaker_embed_dim: 128,
            prenet_dims: [256, 256],
            decoder_recurrent_dim: 1024,
            output_dim: N_MELS,
            duration_recurrent_dim: 512,
            duration_layers: 2,
            prenet_dropout: 0.5,
            shared_encoder: true,
            n_phones: INVENTORY.len(),
            n_speakers: 1,
            scale_factor: 1.0,
        }
    }
}

/// Effective widths after scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub embed: usize,
    pub conv: usize,
    /// Per-direction width of the text LSTM.
    pub encoder_half: usize,
    pub speaker: usize,
    pub prenet: [usize; 2],
    pub decoder: usize,
    pub duration_half: usize,
    pub mel: usize,
}

impl Dims {
    pub fn encoder(&self) -> usize {
        2 * self.encoder_half
    }

    /// Width of a frame of hidden representation: `[text | position | speaker]`.
    pub fn hidden(&self) -> usize {
        self.encoder() + 1 + self.speaker
    }
}

impl ModelConfig {
    pub fn scaled(scale_factor: f64) -> Self {
        ModelConfig { scale_factor, ..Default::default() }
    }

    fn scale(&self, d: usize) -> usize {
        (libm::round(d as f64 * self.scale_factor) as usize).max(1)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            embed: self.scale(self.text_embed_dim),
            conv: self.scale(self.conv_channels),
            encoder_half: self.scale(self.encoder_recurrent_dim / 2),
            speaker: self.scale(self.speaker_embed_dim),
            prenet: [self.scale(self.prenet_dims[0]), self.scale(self.prenet_dims[1])],
            decoder: self.scale(self.decoder_recurrent_dim),
            duration_half: self.scale(self.duration_recurrent_dim / 2),
            mel: self.output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("text_embed_dim", self.text_embed_dim),
            ("conv_layers", self.conv_layers),
            ("conv_kernel", self.conv_kernel),
            ("conv_channels", self.conv_channels),
            ("encoder_recurrent_dim", self.encoder_recurrent_dim),
            ("speaker_embed_dim", self.speaker_embed_dim),
            ("prenet_dims[0]", self.prenet_dims[0]),
            ("prenet_dims[1]", self.prenet_dims[1]),
            ("decoder_recurrent_dim", self.decoder_recurrent_dim),
            ("duration_recurrent_dim", self.duration_recurrent_dim),
            ("duration_layers", self.duration_layers),
            ("n_phones", self.n_phones),
            ("n_speakers", self.n_speakers),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("model config: {name} must be at least 1")));
        }
        if self.encoder_recurrent_dim < 2 || self.duration_recurrent_dim < 2 {
            return Err(Error::invalid("model config: bidirectional widths must be at least 2"));
        }
        if self.output_dim != N_MELS {
            return Err(Error::invalid(format!("model config: output_dim must be {N_MELS}")));
        }
        if self.conv_kernel.is_multiple_of(2) {
            return Err(Error::invalid("model config: conv_kernel must be odd"));
        }
        if !(0.0..1.0).contains(&self.prenet_dropout) {
            return Err(Error::invalid("model config: prenet_dropout must be in [0, 1)"));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return Err(Error::invalid("model config: scale_factor must be in (0, 1]"));
        }
        Ok(())
    }
}
