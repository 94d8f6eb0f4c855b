//! Deletion, insertion and replacement on a recorded mel-spectrogram.
//!
//! An edit splits the utterance into an unmodified prefix `A`, the modified
//! stretch `B` (replaced by `B'`) and an unmodified suffix `C`. Formulas use
//! 1-indexed frames `t = 1..=t_tot`; storage is 0-indexed. [`RegionSplit`]
//! is the only place that converts between the two.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::acoustic::{Direction, HiddenSeq, Models};
use crate::dsp::{MelSpectrogram, N_MELS};
use crate::frontend::{g2p, locate_region, splice_phones, Alignment, EditOperation, EditRequest, Lexicon, PhoneSequence, Region};
use crate::{Error, Result};

/// Frame lengths of the three regions before and after an edit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RegionSplit {
    pub len_a: usize,
    pub len_b_edit: usize,
    pub len_c: usize,
    pub orig_len_b: usize,
}

impl RegionSplit {
    pub fn new(len_a: usize, len_b_edit: usize, len_c: usize, orig_len_b: usize) -> Result<Self> {
        if len_a + len_b_edit + len_c == 0 {
            return Err(Error::invalid("an edit must leave at least one frame"));
        }
        Ok(RegionSplit { len_a, len_b_edit, len_c, orig_len_b })
    }

    /// Frames after the edit.
    pub fn t_tot(&self) -> usize {
        self.len_a + self.len_b_edit + self.len_c
    }

    /// Frames before the edit.
    pub fn original_frames(&self) -> usize {
        self.len_a + self.orig_len_b + self.len_c
    }

    /// First modified frame, 1-indexed (`len_A + 1`).
    pub fn first_modified(&self) -> usize {
        self.len_a + 1
    }

    /// Last modified frame, 1-indexed (`len_A + len_B'`). Equals `len_A`
    /// when the modified region is empty.
    pub fn last_modified(&self) -> usize {
        self.len_a + self.len_b_edit
    }

    /// Whether 1-indexed frame `t` lies in `(len_A, len_A + len_B']`.
    pub fn is_modified(&self, t: usize) -> bool {
        t > self.len_a && t <= self.last_modified()
    }

    /// Modified region as 0-indexed storage rows.
    pub fn modified_rows(&self) -> Range<usize> {
        self.len_a..self.last_modified()
    }

    /// Region `C` as 0-indexed rows of the edited sequence.
    pub fn c_rows(&self) -> Range<usize> {
        self.last_modified()..self.t_tot()
    }

    /// Original 0-indexed row feeding edited row `row`, for rows in `A` or
    /// `C`. `C` is shifted by `orig_len_B - len_B'`.
    pub fn original_row(&self, row: usize) -> Option<usize> {
        if row < self.len_a {
            Some(row)
        } else if row >= self.last_modified() && row < self.t_tot() {
            Some(row + self.orig_len_b - self.len_b_edit)
        } else {
            None
        }
    }
}

/// Contiguous run of predicted frames starting at 0-indexed row `start`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedSpan {
    pub start: usize,
    data: Vec<f64>,
}

impl PredictedSpan {
    pub fn new(start: usize, data: Vec<f64>) -> Result<Self> {
        if !data.len().is_multiple_of(N_MELS) {
            return Err(Error::shape(format!("span payload of {} values is not whole frames", data.len())));
        }
        Ok(PredictedSpan { start, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / N_MELS
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows covered, 0-indexed.
    pub fn rows(&self) -> Range<usize> {
        self.start..self.start + self.len()
    }

    /// Frame at absolute 0-indexed row, if covered.
    pub fn row(&self, row: usize) -> Option<&[f64]> {
        let k = row.checked_sub(self.start)?;
        self.data.get(k * N_MELS..(k + 1) * N_MELS)
    }

    /// Drops every frame before `row`.
    pub fn trimmed_from(&self, row: usize) -> PredictedSpan {
        let skip = row.saturating_sub(self.start).min(self.len());
        PredictedSpan { start: self.start + skip, data: self.data[skip * N_MELS..].to_vec() }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Removes `frames` from `mel`; other frames are copied bit-exactly.
pub fn delete_region(mel: &MelSpectrogram, frames: Range<usize>) -> Result<MelSpectrogram> {
    let n = mel.n_frames();
    if frames.start > frames.end || frames.end > n {
        return Err(Error::invalid(format!("frame range [{}, {}) invalid for {n} frames", frames.start, frames.end)));
    }
    if frames.len() == n {
        return Err(Error::invalid("deleting every frame leaves an empty utterance"));
    }
    let data = mel.as_slice();
    let mut out = Vec::with_capacity((n - frames.len()) * N_MELS);
    out.extend_from_slice(&data[..frames.start * N_MELS]);
    out.extend_from_slice(&data[frames.end * N_MELS..]);
    MelSpectrogram::new(out, n - frames.len())
}

/// Rescales predicted `B'` durations to the speaking rate of the unmodified
/// context: `s = (sum orig_A + sum orig_C) / (sum pred_A + sum pred_C)`, and
/// `s = 1` when both `A` and `C` are empty. `d * s` is rounded half up in
/// exact integer arithmetic and clamped to at least one frame.
pub fn refine_durations(orig_a: &[usize], orig_c: &[usize], pred_a: &[usize], pred_c: &[usize], pred_b_edit: &[usize]) -> Vec<usize> {
    let orig: usize = orig_a.iter().chain(orig_c).sum();
    let pred: usize = pred_a.iter().chain(pred_c).sum();
    if pred == 0 {
        return pred_b_edit.iter().map(|d| (*d).max(1)).collect();
    }
    pred_b_edit.iter().map(|d| ((2 * d * orig + pred) / (2 * pred)).max(1)).collect()
}

/// Runs one decoder over its part of the edited sequence in partial
/// inference mode.
///
/// Forward visits rows `0..len_A + len_B'`: inside `A` the prediction is
/// recorded but the original frame is fed back; inside `B'` the decoder
/// feeds itself. Backward mirrors this from the last row down to `len_A`,
/// feeding original `C` frames. Both start from a zero frame, zero hidden
/// frame and zero state.
pub fn partial_inference(
    dir: Direction,
    models: &Models,
    hidden: &HiddenSeq,
    original: &MelSpectrogram,
    split: &RegionSplit,
) -> Result<PredictedSpan> {
    if hidden.n_frames() != split.t_tot() {
        return Err(Error::shape(format!("hidden has {} frames, edit needs {}", hidden.n_frames(), split.t_tot())));
    }
    if original.n_frames() != split.original_frames() {
        return Err(Error::shape(format!(
            "original mel has {} frames, split expects {}",
            original.n_frames(),
            split.original_frames()
        )));
    }
    let model = &models.acoustic;
    let rows: Vec<usize> = match dir {
        Direction::Forward => (0..split.last_modified()).collect(),
        Direction::Backward => (split.len_a..split.t_tot()).rev().collect(),
    };
    let zero_h = vec![0.0; hidden.dim()];
    let mut prev = vec![0.0; N_MELS];
    let mut h_prev: &[f64] = &zero_h;
    let mut state = crate::acoustic::DecoderState::zeros(model.decoder_dim());
    let mut out = vec![0.0; rows.len() * N_MELS];
    let start = rows.iter().copied().min().unwrap_or(split.len_a);
    for &row in &rows {
        let (m, next) = model.decode_step(dir, &prev, h_prev, hidden.frame(row), &state)?;
        out[(row - start) * N_MELS..(row - start + 1) * N_MELS].copy_from_slice(&m);
        prev = match split.original_row(row) {
            Some(orig) => original.frame(orig).to_vec(),
            None => m,
        };
        h_prev = hidden.frame(row);
        state = next;
    }
    PredictedSpan::new(start, out)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `argmin_t ||fwd_t - bwd_t||_2` over the modified region, 1-indexed, ties
/// to the earliest frame.
pub fn select_fusion_point(forward: &PredictedSpan, backward: &PredictedSpan, split: &RegionSplit) -> Result<usize> {
    if split.len_b_edit == 0 {
        return Err(Error::invalid("fusion needs a non-empty modified region"));
    }
    let mut best: Option<(usize, f64)> = None;
    for t in split.first_modified()..=split.last_modified() {
        let row = t - 1;
        let (Some(f), Some(b)) = (forward.row(row), backward.row(row)) else {
            return Err(Error::shape(format!("predictions do not cover modified frame {t}")));
        };
        let d = l2(f, b);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((t, d));
        }
    }
    Ok(best.map(|(t, _)| t).unwrap())
}

/// Piecewise assembly: original `A`, forward frames up to and including
/// `t_fusion`, backward frames after it, original `C`.
pub fn fuse(
    original: &MelSpectrogram,
    forward: &PredictedSpan,
    backward: &PredictedSpan,
    split: &RegionSplit,
    t_fusion: usize,
) -> Result<MelSpectrogram> {
    if original.n_frames() != split.original_frames() {
        return Err(Error::shape("original mel does not match the split"));
    }
    if split.len_b_edit > 0 && !split.is_modified(t_fusion) {
        return Err(Error::invalid(format!(
            "t_fusion {t_fusion} outside modified region ({}, {}]",
            split.len_a,
            split.last_modified()
        )));
    }
    let mut out = Vec::with_capacity(split.t_tot() * N_MELS);
    for row in 0..split.t_tot() {
        let t = row + 1;
        let frame = match split.original_row(row) {
            Some(orig) => original.frame(orig),
            None if t <= t_fusion => forward.row(row).ok_or_else(|| Error::shape(format!("no forward frame {t}")))?,
            None => backward.row(row).ok_or_else(|| Error::shape(format!("no backward frame {t}")))?,
        };
        out.extend_from_slice(frame);
    }
    MelSpectrogram::new(out, split.t_tot())
}

/// How the modified region is filled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Forward and backward predictions joined at the closest frame.
    #[default]
    Bidirectional,
    /// Forward predictions only; the right boundary is left unsmoothed.
    ForwardOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditOptions {
    pub fusion: FusionMode,
}

/// A recorded utterance ready for editing.
#[derive(Clone, Copy, Debug)]
pub struct Utterance<'a> {
    pub mel: &'a MelSpectrogram,
    pub alignment: &'a Alignment,
    pub speaker: usize,
}

/// Everything decided before synthesis: phones, durations and the split.
#[derive(Clone, Debug, PartialEq)]
pub struct EditPlan {
    pub region: Region,
    /// Phones of `B'`.
    pub new_phones: PhoneSequence,
    /// `P_A ++ P_B' ++ P_C`.
    pub edited_phones: PhoneSequence,
    /// Duration predictor output over `edited_phones`.
    pub predicted_durations: Vec<usize>,
    /// `[dur_A, dur_B', dur_C]` with original `A`/`C` and refined `B'`.
    pub edited_durations: Vec<usize>,
    pub split: RegionSplit,
}

impl EditPlan {
    /// Phone index range of `B'` inside the edited sequence.
    pub fn new_phone_range(&self) -> Range<usize> {
        self.region.phones.start..self.region.phones.start + self.new_phones.len()
    }
}

fn check_utterance(utt: &Utterance) -> Result<()> {
    if utt.mel.n_frames() != utt.alignment.total_frames {
        return Err(Error::MalformedAlignment(format!(
            "alignment covers {} frames, mel has {}",
            utt.alignment.total_frames,
            utt.mel.n_frames()
        )));
    }
    Ok(())
}

/// Locates the region, converts `new_text` to phones and chooses durations
/// for an insert or replace. Out-of-vocabulary words fail here, before any
/// synthesis.
pub fn plan_edit(models: &Models, utt: &Utterance, request: &EditRequest, lexicon: &Lexicon) -> Result<EditPlan> {
    check_utterance(utt)?;
    if request.operation == EditOperation::Delete {
        return Err(Error::InvalidRequest("delete requests are not synthesized".into()));
    }
    let region = locate_region(utt.alignment, request)?;
    let text = request.new_text.as_str();
    let new_phones = g2p(text, lexicon)?;
    if new_phones.is_empty() {
        return Err(Error::InvalidRequest("new_text produced no phones".into()));
    }
    plan_phones(models, utt, region, new_phones)
}

/// [`plan_edit`] for an already located region and `B'` phone sequence
/// (word indices starting at 0).
pub fn plan_phones(models: &Models, utt: &Utterance, region: Region, new_phones: PhoneSequence) -> Result<EditPlan> {
    check_utterance(utt)?;
    if new_phones.is_empty() {
        return Err(Error::InvalidRequest("replacement has no phones".into()));
    }
    let original_phones = utt.alignment.phone_sequence();
    let edited_phones = splice_phones(&original_phones, region.phones.clone(), &new_phones)?;
    let predicted = models.predict_durations(&edited_phones)?;
    let orig = utt.alignment.durations();
    let (orig_a, orig_c) = (&orig[..region.phones.start], &orig[region.phones.end..]);
    let b = region.phones.start..region.phones.start + new_phones.len();
    let refined = refine_durations(orig_a, orig_c, &predicted[..b.start], &predicted[b.end..], &predicted[b.clone()]);
    let mut edited_durations = Vec::with_capacity(edited_phones.len());
    edited_durations.extend_from_slice(orig_a);
    edited_durations.extend_from_slice(&refined);
    edited_durations.extend_from_slice(orig_c);
    let split = RegionSplit::new(
        region.frames.start,
        refined.iter().sum(),
        utt.alignment.total_frames - region.frames.end,
        region.frames.len(),
    )?;
    Ok(EditPlan { region, new_phones, edited_phones, predicted_durations: predicted, edited_durations, split })
}

/// Outcome of one edit.
#[derive(Clone, Debug, PartialEq)]
pub struct EditResult {
    pub edited_mel: MelSpectrogram,
    pub split: RegionSplit,
    /// 1-indexed fusion frame; absent for deletions.
    pub t_fusion: Option<usize>,
    /// Forward predictions over rows `0..len_A + len_B'`.
    pub forward: Option<PredictedSpan>,
    /// Backward predictions over rows `len_A..t_tot`.
    pub backward: Option<PredictedSpan>,
    pub edited_durations: Vec<usize>,
    /// Alignment of the edited utterance, for follow-up edits.
    pub edited_alignment: Alignment,
}

/// Applies one edit request to an utterance.
pub fn edit_utterance(
    models: &Models,
    utt: &Utterance,
    request: &EditRequest,
    lexicon: &Lexicon,
    options: EditOptions,
) -> Result<EditResult> {
    check_utterance(utt)?;
    if request.operation == EditOperation::Delete {
        return delete_words(utt, request);
    }
    let plan = plan_edit(models, utt, request, lexicon)?;
    let hidden = models.acoustic.hidden(&plan.edited_phones, &plan.edited_durations, utt.speaker)?;
    synthesize_plan(models, utt, &plan, &hidden, options)
}

/// Runs partial inference and fusion for a prepared plan.
pub fn synthesize_plan(
    models: &Models,
    utt: &Utterance,
    plan: &EditPlan,
    hidden: &HiddenSeq,
    options: EditOptions,
) -> Result<EditResult> {
    let split = plan.split;
    let forward = partial_inference(Direction::Forward, models, hidden, utt.mel, &split)?;
    let (backward, t_fusion) = match options.fusion {
        FusionMode::Bidirectional => {
            let backward = partial_inference(Direction::Backward, models, hidden, utt.mel, &split)?;
            let t = select_fusion_point(&forward, &backward, &split)?;
            (backward, t)
        }
        FusionMode::ForwardOnly => (PredictedSpan::new(split.len_a, Vec::new())?, split.last_modified()),
    };
    let edited_mel = fuse(utt.mel, &forward, &backward, &split, t_fusion)?;
    let edited_alignment = Alignment::from_durations(utt.alignment.utterance_id.clone(), &plan.edited_phones, &plan.edited_durations)?;
    Ok(EditResult {
        edited_mel,
        split,
        t_fusion: Some(t_fusion),
        forward: Some(forward),
        backward: if options.fusion == FusionMode::Bidirectional { Some(backward) } else { None },
        edited_durations: plan.edited_durations.clone(),
        edited_alignment,
    })
}

fn delete_words(utt: &Utterance, request: &EditRequest) -> Result<EditResult> {
    let region = locate_region(utt.alignment, request)?;
    let edited_mel = delete_region(utt.mel, region.frames.clone())?;
    let phones = utt.alignment.phone_sequence();
    let empty = phones.slice(0..0);
    let edited_phones = splice_phones(&phones, region.phones.clone(), &empty)?;
    let mut durations = utt.alignment.durations();
    durations.drain(region.phones.clone());
    let split = RegionSplit::new(region.frames.start, 0, utt.alignment.total_frames - region.frames.end, region.frames.len())?;
    let edited_alignment = Alignment::from_durations(utt.alignment.utterance_id.clone(), &edited_phones, &durations)?;
    Ok(EditResult {
        edited_mel,
        split,
        t_fusion: None,
        forward: None,
        backward: None,
        edited_durations: durations,
        edited_alignment,
    })
}

/// Diagnostics persisted next to an edited mel.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EditReport {
    pub utterance_id: String,
    pub t_fusion: Option<usize>,
    pub len_a: usize,
    pub len_b_edit: usize,
    pub len_c: usize,
    pub orig_len_b: usize,
    pub edited_durations: Vec<usize>,
}

impl EditResult {
    pub fn report(&self) -> EditReport {
        EditReport {
            utterance_id: self.edited_alignment.utterance_id.clone(),
            t_fusion: self.t_fusion,
            len_a: self.split.len_a,
            len_b_edit: self.split.len_b_edit,
            len_c: self.split.len_c,
            orig_len_b: self.split.orig_len_b,
            edited_durations: self.edited_durations.clone(),
        }
    }
}
