//! The acoustic model: text encoder, length regulator, position embedding,
//! prenet, forward/backward decoders and the duration predictor, with their
//! teacher-forced training steps.

mod config;
mod duration;
mod model;

use alloc::format;
use alloc::vec::Vec;

pub use config::{Dims, ModelConfig};
pub use duration::{duration_loss, frames_from_log, DurationModel};
pub use model::{AcousticModel, DecoderState, Direction, HiddenSeq};

use crate::dsp::MelSpectrogram;
use crate::frontend::PhoneSequence;
use crate::nn::{Adam, AdamConfig, Mat};
use crate::rng::Rng;
use crate::{Error, Result};

/// Phone index for every frame: phone `i` repeated `durations[i]` times.
pub fn length_regulate_indices(durations: &[usize]) -> Result<Vec<usize>> {
    if let Some(i) = durations.iter().position(|d| *d == 0) {
        return Err(Error::invalid(format!("phone {i} has zero duration")));
    }
    Ok(durations
        .iter()
        .enumerate()
        .flat_map(|(i, d)| core::iter::repeat_n(i, *d))
        .collect())
}

/// Expands phone-level rows to frame level.
pub fn length_regulate(embeddings: &Mat, durations: &[usize]) -> Result<Mat> {
    if embeddings.rows() != durations.len() {
        return Err(Error::shape(format!(
            "{} durations for {} phone embeddings",
            durations.len(),
            embeddings.rows()
        )));
    }
    let idx = length_regulate_indices(durations)?;
    let mut data = Vec::with_capacity(idx.len() * embeddings.cols());
    for i in &idx {
        data.extend_from_slice(embeddings.row(*i));
    }
    Ok(Mat::from_vec(idx.len(), embeddings.cols(), data))
}

/// Relative position of each frame inside its phone: `k / (d - 1)`, and 0
/// for single-frame phones.
pub fn position_embedding(durations: &[usize]) -> Result<Vec<f64>> {
    if let Some(i) = durations.iter().position(|d| *d == 0) {
        return Err(Error::invalid(format!("phone {i} has zero duration")));
    }
    Ok(durations
        .iter()
        .flat_map(|&d| (0..d).map(move |k| if d == 1 { 0.0 } else { k as f64 / (d - 1) as f64 }))
        .collect())
}

/// Per-frame `[text | position | speaker]` concatenation.
pub fn build_hidden(text_frames: &Mat, positions: &[f64], speaker: &[f64]) -> Result<HiddenSeq> {
    if text_frames.rows() != positions.len() {
        return Err(Error::shape(format!(
            "{} text frames but {} positions",
            text_frames.rows(),
            positions.len()
        )));
    }
    let width = text_frames.cols() + 1 + speaker.len();
    let mut data = Vec::with_capacity(positions.len() * width);
    for (t, p) in positions.iter().enumerate() {
        data.extend_from_slice(text_frames.row(t));
        data.push(*p);
        data.extend_from_slice(speaker);
    }
    HiddenSeq::new(Mat::from_vec(positions.len(), width, data))
}

/// Per-channel mean over every frame of every item.
pub fn mean_frame(items: &[TrainingItem]) -> Result<Vec<f64>> {
    let frames: usize = items.iter().map(|i| i.mel.n_frames()).sum();
    let Some(first) = items.first() else {
        return Err(Error::invalid("empty training corpus"));
    };
    let mut mean = alloc::vec![0.0; first.mel.n_channels()];
    for item in items {
        for frame in item.mel.frames() {
            for (m, x) in mean.iter_mut().zip(frame) {
                *m += x;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= frames as f64);
    Ok(mean)
}

/// One training utterance with forced-alignment durations.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingItem {
    pub phones: PhoneSequence,
    pub durations: Vec<usize>,
    pub mel: MelSpectrogram,
    pub speaker: usize,
}

impl TrainingItem {
    pub fn validate(&self) -> Result<()> {
        if self.phones.len() != self.durations.len() {
            return Err(Error::shape("one duration per phone required"));
        }
        if self.durations.contains(&0) {
            return Err(Error::invalid("durations must be at least one frame"));
        }
        let total: usize = self.durations.iter().sum();
        if total != self.mel.n_frames() {
            return Err(Error::shape(format!(
                "durations sum to {total} frames, mel has {}",
                self.mel.n_frames()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcousticLosses {
    pub forward: f64,
    pub backward: f64,
}

impl AcousticLosses {
    pub fn total(&self) -> f64 {
        self.forward + self.backward
    }
}

/// Acoustic model and duration predictor, trained and used together.
#[derive(Clone, Debug)]
pub struct Models {
    pub acoustic: AcousticModel,
    pub duration: DurationModel,
}

impl Models {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(Models {
            acoustic: AcousticModel::new(config.clone(), seed)?,
            duration: DurationModel::new(config, seed)?,
        })
    }

    pub fn predict_durations(&self, phones: &PhoneSequence) -> Result<Vec<usize>> {
        self.duration.predict_durations(&self.acoustic, phones)
    }
}

/// One teacher-forced Adam step on `L_fwd + L_bwd`. The model is left
/// untouched if the loss is not finite.
pub fn train_acoustic(model: &mut AcousticModel, opt: &mut Adam, batch: &[TrainingItem], dropout: &mut Rng) -> Result<AcousticLosses> {
    let (losses, grads) = model.loss_and_grads(batch, Some(dropout))?;
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!("acoustic gradient at step {}", model.step)));
    }
    opt.update(&mut model.params, &grads);
    model.step += 1;
    Ok(losses)
}

/// One Adam step on the log-duration MSE.
pub fn train_duration(model: &mut DurationModel, opt: &mut Adam, acoustic: &AcousticModel, batch: &[TrainingItem]) -> Result<f64> {
    let (loss, grads) = model.loss_and_grads(acoustic, batch)?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("duration gradient".into()));
    }
    opt.update(&mut model.params, &grads);
    Ok(loss)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub acoustic: AcousticLosses,
    pub duration: f64,
}

/// Joint training loop state: both models and their optimizers.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub models: Models,
    pub acoustic_opt: Adam,
    pub duration_opt: Adam,
    pub batch_size: usize,
}

impl Trainer {
    pub fn new(config: ModelConfig, adam: AdamConfig, seed: u64, batch_size: usize) -> Result<Self> {
        let models = Models::new(config, seed)?;
        Ok(Trainer::from_models(models, adam, batch_size))
    }

    pub fn from_models(models: Models, adam: AdamConfig, batch_size: usize) -> Self {
        Trainer {
            acoustic_opt: Adam::new(adam.clone(), &models.acoustic.params),
            duration_opt: Adam::new(adam, &models.duration.params),
            models,
            batch_size: batch_size.max(1),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.models.acoustic.step
    }

    /// Corpus indices for a step. A corpus no larger than the batch is used
    /// whole; otherwise each epoch is a seeded permutation.
    pub fn batch_indices(&self, corpus_len: usize, step: u64) -> Vec<usize> {
        if corpus_len <= self.batch_size {
            return (0..corpus_len).collect();
        }
        let per_epoch = corpus_len.div_ceil(self.batch_size) as u64;
        let (epoch, k) = (step / per_epoch, (step % per_epoch) as usize);
        let mut order: Vec<usize> = (0..corpus_len).collect();
        Rng::derived(self.models.acoustic.seed, 0xE90C ^ epoch).shuffle(&mut order);
        let start = k * self.batch_size;
        order[start..(start + self.batch_size).min(corpus_len)].to_vec()
    }

    /// Acoustic step then duration step on the same batch.
    pub fn step(&mut self, corpus: &[TrainingItem]) -> Result<StepReport> {
        if corpus.is_empty() {
            return Err(Error::invalid("empty training corpus"));
        }
        let step = self.models.acoustic.step;
        let batch: Vec<TrainingItem> = self
            .batch_indices(corpus.len(), step)
            .into_iter()
            .map(|i| corpus[i].clone())
            .collect();
        let mut dropout = Rng::derived(self.models.acoustic.seed, 0xD809 ^ step);
        let acoustic = train_acoustic(&mut self.models.acoustic, &mut self.acoustic_opt, &batch, &mut dropout)?;
        let duration = train_duration(&mut self.models.duration, &mut self.duration_opt, &self.models.acoustic, &batch)?;
        Ok(StepReport { step: step + 1, acoustic, duration })
    }
}

#[cfg(test)]
mod tests;
