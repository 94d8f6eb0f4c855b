//! Objective evaluation: DTW, mel-cepstral distortion, the four baseline
//! editing systems and the masked-reconstruction experiment.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::acoustic::{Direction, Models};
use crate::dsp::{mcep, mel_spectrogram, MCEPSequence, MelSpectrogram, Vocoder, N_MELS};
use crate::editing::{edit_utterance, plan_phones, synthesize_plan, EditOptions, EditPlan, EditResult, FusionMode, Utterance};
use crate::frontend::{Alignment, EditRequest, Lexicon, PhoneSequence, Region};
use crate::{Error, Result};

/// Monotone alignment between two sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DTWPath {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Minimal-cost alignment under Euclidean frame distance with steps
/// (1,0), (0,1), (1,1). Backtracking prefers the diagonal on ties.
pub fn dtw(x: &MCEPSequence, y: &MCEPSequence) -> Result<DTWPath> {
    let (n, m) = (x.n_frames(), y.n_frames());
    if n == 0 || m == 0 {
        return Err(Error::invalid("DTW needs two non-empty sequences"));
    }
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = euclidean(x.frame(i), y.frame(j));
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i * m + j] = c + best;
        }
    }
    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[(i - 1) * m + j - 1];
            let up = acc[(i - 1) * m + j];
            let left = acc[i * m + j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(DTWPath { pairs, total_cost: acc[n * m - 1] })
}

/// `10 / ln 10`.
pub const MCD_SCALE: f64 = 4.342_944_819_032_518;

/// Per-pair distortion in dB: `(10 / ln 10) * sqrt(2 * sum (c_d - c'_d)^2)`.
pub fn frame_distortion(a: &[f64], b: &[f64]) -> f64 {
    MCD_SCALE * libm::sqrt(2.0 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

/// Running sum of per-pair distortions, so several segments can be pooled.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DistortionSum {
    pub total: f64,
    pub pairs: usize,
}

impl DistortionSum {
    /// Adds the pairs of `x` against `y`: frame by frame when `aligned`,
    /// otherwise along the DTW path. Empty segment pairs add nothing.
    pub fn add(&mut self, x: &MCEPSequence, y: &MCEPSequence, aligned: bool) -> Result<()> {
        if x.is_empty() && y.is_empty() {
            return Ok(());
        }
        if aligned {
            if x.n_frames() != y.n_frames() {
                return Err(Error::shape(format!("aligned MCD needs equal lengths, got {} and {}", x.n_frames(), y.n_frames())));
            }
            for (a, b) in x.frames().zip(y.frames()) {
                self.total += frame_distortion(a, b);
            }
            self.pairs += x.n_frames();
        } else {
            for (i, j) in dtw(x, y)?.pairs {
                self.total += frame_distortion(x.frame(i), y.frame(j));
                self.pairs += 1;
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> Result<f64> {
        if self.pairs == 0 {
            return Err(Error::invalid("MCD over zero frame pairs"));
        }
        Ok(self.total / self.pairs as f64)
    }
}

/// Mean distortion over aligned frame pairs. Unaligned inputs are DTW-aligned
/// first.
pub fn mcd(x: &MCEPSequence, y: &MCEPSequence, aligned: bool) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("MCD of an empty sequence"));
    }
    let mut sum = DistortionSum::default();
    sum.add(x, y, aligned)?;
    sum.mean()
}

/// Baseline 1: plain TTS of the whole edited text with predicted durations,
/// ignoring the recording.
pub fn synthesize_baseline1(models: &Models, edited_phones: &PhoneSequence, speaker: usize) -> Result<MelSpectrogram> {
    let durations = models.predict_durations(edited_phones)?;
    let hidden = models.acoustic.hidden(edited_phones, &durations, speaker)?;
    models.acoustic.free_run(Direction::Forward, &hidden)
}

fn splice(original: &MelSpectrogram, a_end: usize, middle: &[f64], c_start: usize) -> Result<MelSpectrogram> {
    let data = original.as_slice();
    let mut out = Vec::with_capacity(data.len() + middle.len());
    out.extend_from_slice(&data[..a_end * N_MELS]);
    out.extend_from_slice(middle);
    out.extend_from_slice(&data[c_start * N_MELS..]);
    let n = out.len() / N_MELS;
    MelSpectrogram::new(out, n)
}

/// Baseline 2: `B'` synthesized on its own from zero context with the
/// plan's refined durations, then concatenated between original `A` and `C`.
pub fn synthesize_baseline2(models: &Models, plan: &EditPlan, original: &MelSpectrogram, speaker: usize) -> Result<MelSpectrogram> {
    let durations = &plan.edited_durations[plan.new_phone_range()];
    let hidden = models.acoustic.hidden(&plan.new_phones, durations, speaker)?;
    let middle = models.acoustic.free_run(Direction::Forward, &hidden)?;
    let s = plan.split;
    splice(original, s.len_a, middle.as_slice(), s.len_a + s.orig_len_b)
}

/// Baseline 3 output with the candidate span that was cut out.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline3Output {
    pub mel: MelSpectrogram,
    pub candidate: MelSpectrogram,
    /// Rows of `candidate` spliced in.
    pub located: Range<usize>,
    /// DTW mapped `B'` to an empty span and the duration span was used.
    pub fallback: bool,
}

/// Baseline 3: a baseline-1 candidate is DTW-aligned to the original; the
/// candidate frames between the end of `A` and the start of `C` are cut
/// out and spliced between original `A` and `C`.
pub fn synthesize_baseline3(models: &Models, plan: &EditPlan, original: &MelSpectrogram, speaker: usize) -> Result<Baseline3Output> {
    let durations = models.predict_durations(&plan.edited_phones)?;
    let hidden = models.acoustic.hidden(&plan.edited_phones, &durations, speaker)?;
    let candidate = models.acoustic.free_run(Direction::Forward, &hidden)?;
    let s = plan.split;
    let path = dtw(&mcep(original), &mcep(&candidate))?;
    let (located, fallback) = match locate_by_path(&path, s.len_a, s.len_a + s.orig_len_b, original.n_frames(), candidate.n_frames()) {
        Some(r) => (r, false),
        None => {
            let b = plan.new_phone_range();
            let start: usize = durations[..b.start].iter().sum();
            let len: usize = durations[b].iter().sum();
            (start..start + len, true)
        }
    };
    let middle = &candidate.as_slice()[located.start * N_MELS..located.end * N_MELS];
    let mel = splice(original, s.len_a, middle, s.len_a + s.orig_len_b)?;
    Ok(Baseline3Output { mel, candidate, located, fallback })
}

/// Candidate rows strictly after those paired with the last `A` frame and
/// strictly before those paired with the first `C` frame. `None` when that
/// span is empty.
pub fn locate_by_path(path: &DTWPath, a_end: usize, c_start: usize, n_original: usize, n_candidate: usize) -> Option<Range<usize>> {
    let start = if a_end == 0 {
        0
    } else {
        path.pairs.iter().filter(|(i, _)| *i == a_end - 1).map(|(_, j)| j + 1).max()?
    };
    let end = if c_start >= n_original {
        n_candidate
    } else {
        path.pairs.iter().filter(|(i, _)| *i == c_start).map(|(_, j)| *j).min()?
    };
    (start < end).then_some(start..end)
}

/// Baseline 4: the proposed pipeline with the forward decoder only.
pub fn synthesize_baseline4(models: &Models, utt: &Utterance, request: &EditRequest, lexicon: &Lexicon) -> Result<EditResult> {
    edit_utterance(models, utt, request, lexicon, EditOptions { fusion: FusionMode::ForwardOnly })
}

/// Systems compared in the masked-reconstruction experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Proposed,
    Baseline1,
    Baseline2,
    Baseline3,
    Baseline4,
}

impl System {
    pub const ALL: [System; 5] = [System::Proposed, System::Baseline1, System::Baseline2, System::Baseline3, System::Baseline4];

    pub fn label(self) -> &'static str {
        match self {
            System::Proposed => "Proposed",
            System::Baseline1 => "Baseline1",
            System::Baseline2 => "Baseline2",
            System::Baseline3 => "Baseline3",
            System::Baseline4 => "Baseline4",
        }
    }

    pub fn parse(name: &str) -> Result<System> {
        let lower = name.trim().to_ascii_lowercase();
        System::ALL
            .into_iter()
            .find(|s| s.label().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::invalid(format!("unknown system {name:?}")))
    }
}

/// An utterance with its transcript, ready for evaluation.
#[derive(Clone, Debug)]
pub struct EvalUtterance {
    pub id: String,
    pub mel: MelSpectrogram,
    pub alignment: Alignment,
    pub speaker: usize,
}

/// One system's output with its regions as output rows.
#[derive(Clone, Debug)]
pub struct SystemOutput {
    pub mel: MelSpectrogram,
    pub a: Range<usize>,
    pub b: Range<usize>,
    pub c: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMcd {
    pub utterance_id: String,
    pub mcd_modified: f64,
    pub mcd_unmodified: f64,
    pub mcd_whole: f64,
}

/// Mean distortions for one system across the evaluated utterances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCDReport {
    pub system: System,
    pub mcd_modified: f64,
    pub mcd_unmodified: f64,
    pub mcd_whole: f64,
    pub utterances: Vec<UtteranceMcd>,
}

/// Domain of the compared features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalLevel {
    /// MCEPs of the mel-spectrograms directly.
    #[default]
    Mel,
    /// MCEPs re-extracted from vocoded audio of both sides.
    Waveform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub level: EvalLevel,
    pub mask_fraction: f64,
    pub systems: Vec<MCDReport>,
    /// Utterances left out, with the reason.
    pub skipped: Vec<String>,
}

impl EvaluationReport {
    pub fn system(&self, system: System) -> Option<&MCDReport> {
        self.systems.iter().find(|r| r.system == system)
    }

    /// Aligned text table: systems by {Modi., Unmodi., Whole}.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8}", "System", "Modi.", "Unmodi.", "Whole");
        for r in &self.systems {
            let _ = writeln!(out, "{:<10} {:>8.3} {:>8.3} {:>8.3}", r.system.label(), r.mcd_modified, r.mcd_unmodified, r.mcd_whole);
        }
        out
    }
}

/// Word range masked for an utterance of `words` words: the middle
/// `ceil(words * fraction)` words. `None` when fewer than 3 words.
pub fn masked_words(words: usize, fraction: f64) -> Option<Range<usize>> {
    if words < 3 || !(fraction > 0.0 && fraction < 1.0) {
        return None;
    }
    let k = (libm::ceil(words as f64 * fraction - 1e-9) as usize).clamp(1, words - 1);
    let first = (words - k) / 2;
    Some(first..first + k)
}

/// Original phones of `region`, renumbered so their first word is 0.
fn region_phones(alignment: &Alignment, region: &Region) -> Result<PhoneSequence> {
    let all = alignment.phone_sequence();
    let part = all.slice(region.phones.clone());
    let base = part.word_indices().first().copied().unwrap_or(0);
    PhoneSequence::new(part.phones().to_vec(), part.word_indices().iter().map(|w| w - base).collect())
}

/// Runs one system on a masked utterance. `B'` is the original phone string
/// of the masked words, re-synthesized.
pub fn run_system(models: &Models, utt: &EvalUtterance, words: Range<usize>, system: System) -> Result<SystemOutput> {
    let u = Utterance { mel: &utt.mel, alignment: &utt.alignment, speaker: utt.speaker };
    let request = EditRequest::delete(words.start, words.end - 1);
    let region = crate::frontend::locate_region(&utt.alignment, &request)?;
    let plan = plan_phones(models, &u, region.clone(), region_phones(&utt.alignment, &region)?)?;
    let s = plan.split;
    let regions = |b_len: usize| {
        let c_start = s.len_a + b_len;
        (0..s.len_a, s.len_a..c_start, c_start..c_start + s.len_c)
    };
    let (mel, (a, b, c)) = match system {
        System::Proposed | System::Baseline4 => {
            let fusion = if system == System::Proposed { FusionMode::Bidirectional } else { FusionMode::ForwardOnly };
            let hidden = models.acoustic.hidden(&plan.edited_phones, &plan.edited_durations, utt.speaker)?;
            let result = synthesize_plan(models, &u, &plan, &hidden, EditOptions { fusion })?;
            (result.edited_mel, regions(s.len_b_edit))
        }
        System::Baseline1 => {
            let mel = synthesize_baseline1(models, &plan.edited_phones, utt.speaker)?;
            let d = models.predict_durations(&plan.edited_phones)?;
            let b = plan.new_phone_range();
            let a_end: usize = d[..b.start].iter().sum();
            let c_start = a_end + d[b].iter().sum::<usize>();
            let n = mel.n_frames();
            (mel, (0..a_end, a_end..c_start, c_start..n))
        }
        System::Baseline2 => (synthesize_baseline2(models, &plan, &utt.mel, utt.speaker)?, regions(s.len_b_edit)),
        System::Baseline3 => {
            let out = synthesize_baseline3(models, &plan, &utt.mel, utt.speaker)?;
            (out.mel, regions(out.located.len()))
        }
    };
    Ok(SystemOutput { mel, a, b, c })
}

/// Modified (always DTW), unmodified (`A` and `C` pooled; direct pairing
/// when lengths match) and whole-utterance (direct when lengths match)
/// distortions of `output` against `original`.
pub fn score_output(output: &SystemOutput, out_mcep: &MCEPSequence, original: &MelSpectrogram, orig_mcep: &MCEPSequence, orig_b: Range<usize>) -> Result<(f64, f64, f64)> {
    let seg = |m: &MCEPSequence, r: &Range<usize>| m.slice(r.start, r.end);
    let orig_a = 0..orig_b.start;
    let orig_c = orig_b.end..original.n_frames();
    let mut modified = DistortionSum::default();
    modified.add(&seg(out_mcep, &output.b), &seg(orig_mcep, &orig_b), false)?;
    let mut unmodified = DistortionSum::default();
    for (o, r) in [(&output.a, &orig_a), (&output.c, &orig_c)] {
        let (x, y) = (seg(out_mcep, o), seg(orig_mcep, r));
        if x.is_empty() != y.is_empty() {
            return Err(Error::shape("system output lost an unmodified region"));
        }
        unmodified.add(&x, &y, x.n_frames() == y.n_frames())?;
    }
    let mut whole = DistortionSum::default();
    whole.add(out_mcep, orig_mcep, out_mcep.n_frames() == orig_mcep.n_frames())?;
    Ok((modified.mean()?, unmodified.mean()?, whole.mean()?))
}

fn features(mel: &MelSpectrogram, vocoder: Option<&dyn Vocoder>) -> Result<MCEPSequence> {
    match vocoder {
        None => Ok(mcep(mel)),
        Some(v) => {
            let wave = v.synthesize(mel)?;
            let remel = mel_spectrogram(&wave)?;
            if remel.n_frames() != mel.n_frames() {
                return Err(Error::shape(format!(
                    "vocoded audio re-analyses to {} frames, expected {}",
                    remel.n_frames(),
                    mel.n_frames()
                )));
            }
            Ok(mcep(&remel))
        }
    }
}

/// Masks the middle words of each utterance, reconstructs them with every
/// system and reports mean distortions. Utterances under three words are
/// skipped and listed. With a vocoder, features are re-extracted from
/// vocoded audio of both the original and each output.
pub fn masked_reconstruction(
    models: &Models,
    utterances: &[EvalUtterance],
    fraction: f64,
    systems: &[System],
    vocoder: Option<&dyn Vocoder>,
) -> Result<EvaluationReport> {
    if systems.is_empty() {
        return Err(Error::invalid("no systems selected"));
    }
    let mut per_system: Vec<Vec<UtteranceMcd>> = vec![Vec::new(); systems.len()];
    let mut skipped = Vec::new();
    for utt in utterances {
        let Some(words) = masked_words(utt.alignment.word_count(), fraction) else {
            skipped.push(format!("{}: fewer than 3 words", utt.id));
            continue;
        };
        let request = EditRequest::delete(words.start, words.end - 1);
        let orig_b = crate::frontend::locate_region(&utt.alignment, &request)?.frames;
        let orig_mcep = features(&utt.mel, vocoder)?;
        for (k, system) in systems.iter().enumerate() {
            let output = run_system(models, utt, words.clone(), *system)?;
            let out_mcep = features(&output.mel, vocoder)?;
            let (m, u, w) = score_output(&output, &out_mcep, &utt.mel, &orig_mcep, orig_b.clone())?;
            per_system[k].push(UtteranceMcd { utterance_id: utt.id.clone(), mcd_modified: m, mcd_unmodified: u, mcd_whole: w });
        }
    }
    let mean = |rows: &[UtteranceMcd], f: fn(&UtteranceMcd) -> f64| {
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(f).sum::<f64>() / rows.len() as f64
        }
    };
    let reports = systems
        .iter()
        .zip(per_system)
        .map(|(system, rows)| MCDReport {
            system: *system,
            mcd_modified: mean(&rows, |r| r.mcd_modified),
            mcd_unmodified: mean(&rows, |r| r.mcd_unmodified),
            mcd_whole: mean(&rows, |r| r.mcd_whole),
            utterances: rows,
        })
        .collect();
    Ok(EvaluationReport {
        level: if vocoder.is_some() { EvalLevel::Waveform } else { EvalLevel::Mel },
        mask_fraction: fraction,
        systems: reports,
        skipped,
    })
}

impl core::fmt::Display for System {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}
