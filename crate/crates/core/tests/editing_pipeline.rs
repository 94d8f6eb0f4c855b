//! End-to-end editing on a synthetic corpus using only the core crate.

use speechedit_core::acoustic::{mean_frame, ModelConfig, Trainer, TrainingItem};
use speechedit_core::dsp::{mcep, mel_spectrogram, MelSpectrogram, Waveform, HOP_SAMPLES, N_MELS, SAMPLE_RATE};
use speechedit_core::editing::{edit_utterance, EditOptions, FusionMode, Utterance};
use speechedit_core::evaluation::{masked_reconstruction, EvalUtterance, System};
use speechedit_core::frontend::{g2p, locate_region, Alignment, EditRequest, Lexicon};
use speechedit_core::nn::AdamConfig;

const LEXICON: &str = "\
hello HH AH0 L OW1
world W ER1 L D
big B IH1 G
blue B L UW1
";

fn lexicon() -> Lexicon {
    Lexicon::parse(LEXICON).unwrap()
}

/// Mel whose frames depend on the phone and the position inside it.
fn item(text: &str, id: &str) -> (TrainingItem, Alignment) {
    let phones = g2p(text, &lexicon()).unwrap();
    let durations: Vec<usize> = phones.phones().iter().map(|p| if p.is_pause() { 3 } else { 4 + p.id() % 3 }).collect();
    let mut data = Vec::new();
    for (p, d) in phones.phones().iter().zip(&durations) {
        for k in 0..*d {
            for c in 0..N_MELS {
                data.push(-5.0 + 2.0 * (0.05 * c as f64 * (1.0 + 0.2 * p.id() as f64)).sin() + 0.05 * k as f64);
            }
        }
    }
    let n: usize = durations.iter().sum();
    let alignment = Alignment::from_durations(id.into(), &phones, &durations).unwrap();
    (TrainingItem { phones, durations, mel: MelSpectrogram::new(data, n).unwrap(), speaker: 0 }, alignment)
}

fn trained() -> (Trainer, Vec<(TrainingItem, Alignment)>) {
    let corpus = vec![item("hello, world", "a"), item("big blue world", "b")];
    let items: Vec<TrainingItem> = corpus.iter().map(|(i, _)| i.clone()).collect();
    let mut trainer = Trainer::new(ModelConfig::scaled(1.0 / 32.0), AdamConfig::default(), 3, 2).unwrap();
    trainer.models.acoustic.set_output_bias(&mean_frame(&items).unwrap()).unwrap();
    for _ in 0..5 {
        trainer.step(&items).unwrap();
    }
    (trainer, corpus)
}

#[test]
fn replace_keeps_context_bit_exact_and_fuses_inside_region() {
    let (trainer, corpus) = trained();
    let (item, alignment) = &corpus[0];
    let utt = Utterance { mel: &item.mel, alignment, speaker: 0 };
    let req = EditRequest::replace(1, 1, "big blue");
    let out = edit_utterance(&trainer.models, &utt, &req, &lexicon(), EditOptions::default()).unwrap();
    let split = out.split;
    let region = locate_region(alignment, &req).unwrap();
    assert_eq!(split.len_a, region.frames.start);
    assert_eq!(split.orig_len_b, region.frames.len());
    assert_eq!(out.edited_mel.n_frames(), split.t_tot());
    let t = out.t_fusion.unwrap();
    assert!(split.is_modified(t));
    for row in 0..split.len_a {
        assert_eq!(out.edited_mel.frame(row), item.mel.frame(row));
    }
    for row in split.c_rows() {
        assert_eq!(out.edited_mel.frame(row), item.mel.frame(split.original_row(row).unwrap()));
    }
    assert_eq!(out.edited_alignment.total_frames, split.t_tot());
}

#[test]
fn forward_only_fuses_at_region_end() {
    let (trainer, corpus) = trained();
    let (item, alignment) = &corpus[1];
    let utt = Utterance { mel: &item.mel, alignment, speaker: 0 };
    let req = EditRequest::insert(1, "hello");
    let out = edit_utterance(&trainer.models, &utt, &req, &lexicon(), EditOptions { fusion: FusionMode::ForwardOnly }).unwrap();
    assert_eq!(out.t_fusion, Some(out.split.last_modified()));
    assert!(out.backward.is_none());
}

#[test]
fn oov_and_whole_deletion_are_rejected() {
    let (trainer, corpus) = trained();
    let (item, alignment) = &corpus[0];
    let utt = Utterance { mel: &item.mel, alignment, speaker: 0 };
    let oov = edit_utterance(&trainer.models, &utt, &EditRequest::replace(0, 0, "zebra"), &lexicon(), EditOptions::default());
    assert!(oov.unwrap_err().to_string().contains("zebra"));
    let all = edit_utterance(&trainer.models, &utt, &EditRequest::delete(0, 1), &lexicon(), EditOptions::default());
    assert!(all.is_err());
}

#[test]
fn masked_reconstruction_scores_every_system() {
    let (trainer, corpus) = trained();
    let utts: Vec<EvalUtterance> = corpus
        .iter()
        .map(|(i, a)| EvalUtterance { id: a.utterance_id.clone(), mel: i.mel.clone(), alignment: a.clone(), speaker: 0 })
        .collect();
    let report = masked_reconstruction(&trainer.models, &utts, 1.0 / 3.0, &System::ALL, None).unwrap();
    for s in System::ALL {
        let r = report.system(s).unwrap();
        assert!(r.mcd_whole.is_finite() && r.mcd_modified.is_finite());
    }
    for s in [System::Proposed, System::Baseline2, System::Baseline4] {
        assert_eq!(report.system(s).unwrap().mcd_unmodified, 0.0);
    }
    assert!(report.table().starts_with("System"));
}

#[test]
fn analysis_frame_grid_and_mcep_width() {
    let n = SAMPLE_RATE as usize / 2;
    let wave = Waveform::from_unclamped((0..n).map(|i| 0.3 * (i as f64 * 0.05).sin()), SAMPLE_RATE).unwrap();
    let mel = mel_spectrogram(&wave).unwrap();
    assert_eq!(mel.n_frames(), 1 + n / HOP_SAMPLES);
    let c = mcep(&mel);
    assert_eq!(c.n_frames(), mel.n_frames());
    assert_eq!(c.frame(0).len(), 13);
}
