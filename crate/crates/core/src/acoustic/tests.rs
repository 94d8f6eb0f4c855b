use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::dsp::N_MELS;
use crate::frontend::Phone;
use crate::nn::Mat;

fn tiny_config() -> ModelConfig {
    ModelConfig { scale_factor: 1.0 / 32.0, n_speakers: 2, ..Default::default() }
}

fn phones(symbols: &[&str]) -> PhoneSequence {
    let words = (0..symbols.len()).map(|i| i / 2).collect();
    PhoneSequence::from_symbols(symbols, words).unwrap()
}

/// Deterministic smooth mel pattern keyed by phone identity.
pub(crate) fn synthetic_item(symbols: &[&str], durations: &[usize], speaker: usize) -> TrainingItem {
    let seq = phones(symbols);
    let mut data = Vec::new();
    for (p, d) in seq.phones().iter().zip(durations) {
        for k in 0..*d {
            for c in 0..N_MELS {
                let base = -4.0 + 2.0 * libm::sin(0.07 * (c as f64) * (1.0 + p.id() as f64 * 0.13));
                data.push(base + 0.1 * k as f64 + 0.3 * speaker as f64);
            }
        }
    }
    let n = durations.iter().sum();
    TrainingItem { phones: seq, durations: durations.to_vec(), mel: MelSpectrogram::new(data, n).unwrap(), speaker }
}

#[test]
fn length_regulate_repeats_rows() {
    let emb = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
    let out = length_regulate(&emb, &[2, 3]).unwrap();
    assert_eq!(out.data(), &[1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0]);
    assert_eq!(length_regulate(&emb, &[1, 1]).unwrap(), emb);
    assert!(length_regulate(&emb, &[1, 0]).is_err());
    assert!(length_regulate(&emb, &[1]).is_err());
}

#[test]
fn position_embedding_interpolates() {
    assert_eq!(position_embedding(&[4]).unwrap(), [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    assert_eq!(position_embedding(&[1]).unwrap(), [0.0]);
    assert_eq!(position_embedding(&[2, 2]).unwrap(), [0.0, 1.0, 0.0, 1.0]);
    assert!(position_embedding(&[3, 0]).is_err());
}

#[test]
fn build_hidden_shapes_and_blocks() {
    let text = Mat::zeros(5, 512);
    let pos = vec![0.0; 5];
    let h = build_hidden(&text, &pos, &[0.0; 128]).unwrap();
    assert_eq!((h.n_frames(), h.dim()), (5, 641));
    assert!(h.frame(3)[513..].iter().all(|v| *v == 0.0));
    assert!(build_hidden(&text, &[0.0; 4], &[0.0; 128]).is_err());
}

#[test]
fn hidden_matches_standalone_composition() {
    let model = AcousticModel::new(tiny_config(), 3).unwrap();
    let seq = phones(&["HH", "AH", "L", "OW"]);
    let durs = [2, 3, 1, 4];
    let text = model.encode_text(&seq).unwrap();
    let manual = build_hidden(
        &length_regulate(&text, &durs).unwrap(),
        &position_embedding(&durs).unwrap(),
        &model.speaker_embedding(1).unwrap(),
    )
    .unwrap();
    assert_eq!(model.hidden(&seq, &durs, 1).unwrap(), manual);
}

#[test]
fn speakers_differ_only_in_speaker_block() {
    let model = AcousticModel::new(tiny_config(), 3).unwrap();
    let seq = phones(&["W", "ER", "L", "D"]);
    let a = model.hidden(&seq, &[2, 2, 2, 2], 0).unwrap();
    let b = model.hidden(&seq, &[2, 2, 2, 2], 1).unwrap();
    let text_w = model.config.dims().encoder() + 1;
    for t in 0..8 {
        assert_eq!(a.frame(t)[..text_w], b.frame(t)[..text_w]);
        assert_ne!(a.frame(t)[text_w..], b.frame(t)[text_w..]);
    }
    assert!(matches!(model.hidden(&seq, &[2, 2, 2, 2], 2), Err(Error::UnknownSpeaker(_))));
}

#[test]
fn encode_text_shape_determinism_and_locality() {
    let model = AcousticModel::new(tiny_config(), 5).unwrap();
    let a = phones(&["HH", "AH", "L", "OW", "sp", "W", "ER"]);
    let out = model.encode_text(&a).unwrap();
    assert_eq!(out.rows(), 7);
    assert_eq!(out, model.encode_text(&a).unwrap());

    let mut symbols = a.symbols();
    symbols[3] = "IY";
    let b = phones(&symbols);
    let out_b = model.encode_text(&b).unwrap();
    assert_ne!(out.row(3), out_b.row(3));
}

#[test]
fn decode_step_basics() {
    let model = AcousticModel::new(tiny_config(), 9).unwrap();
    let d = model.hidden_dim();
    let zero_h = vec![0.0; d];
    let state = DecoderState::zeros(model.decoder_dim());
    let (m, _) = model.decode_step(Direction::Forward, &[0.0; N_MELS], &zero_h, &zero_h, &state).unwrap();
    assert_eq!(m.len(), N_MELS);
    assert!(m.iter().all(|v| v.is_finite()));

    let h: Vec<f64> = (0..d).map(|i| (i as f64 * 0.3).sin()).collect();
    let prev: Vec<f64> = (0..N_MELS).map(|i| -3.0 + (i as f64 * 0.1).cos()).collect();
    let (a, sa) = model.decode_step(Direction::Backward, &prev, &h, &h, &state).unwrap();
    let (b, sb) = model.decode_step(Direction::Backward, &prev, &h, &h, &state).unwrap();
    assert_eq!((a.clone(), sa), (b, sb));

    let mut bumped = prev.clone();
    bumped[10] += 1e-3;
    let (c, _) = model.decode_step(Direction::Backward, &bumped, &h, &h, &state).unwrap();
    assert_ne!(a, c);

    assert!(model.decode_step(Direction::Forward, &[0.0; 79], &h, &h, &state).is_err());
    assert!(model.decode_step(Direction::Forward, &prev, &h[1..], &h, &state).is_err());
    assert!(model.decode_step(Direction::Forward, &prev, &h, &h, &DecoderState::zeros(3)).is_err());
}

fn teacher_forced(model: &AcousticModel, item: &TrainingItem, dir: Direction) -> Mat {
    let mut g = crate::nn::Graph::new(&model.params);
    let text = model.encode_text_graph(&mut g, &item.phones.ids()).unwrap();
    let hid = model.hidden_graph(&mut g, text, &item.durations, item.speaker).unwrap();
    let out = model.teacher_forced_graph(&mut g, hid, &item.mel, dir, None).unwrap();
    g.value(out).clone()
}

#[test]
fn teacher_forcing_equals_stepwise_ground_truth_feeding() {
    let model = AcousticModel::new(tiny_config(), 11).unwrap();
    let item = synthetic_item(&["S", "AH", "N"], &[2, 3, 2], 0);
    let hidden = model.hidden(&item.phones, &item.durations, 0).unwrap();
    for dir in [Direction::Forward, Direction::Backward] {
        let tf = teacher_forced(&model, &item, dir);
        let n = item.mel.n_frames();
        let mut state = DecoderState::zeros(model.decoder_dim());
        let zero_h = vec![0.0; hidden.dim()];
        let order: Vec<usize> = if dir == Direction::Forward { (0..n).collect() } else { (0..n).rev().collect() };
        for t in order {
            let prev_idx = if dir == Direction::Forward { t.checked_sub(1) } else { Some(t + 1).filter(|s| *s < n) };
            let prev = prev_idx.map_or(vec![0.0; N_MELS], |s| item.mel.frame(s).to_vec());
            let hp = prev_idx.map_or(zero_h.as_slice(), |s| hidden.frame(s));
            let (m, s) = model.decode_step(dir, &prev, hp, hidden.frame(t), &state).unwrap();
            state = s;
            assert_eq!(m.as_slice(), tf.row(t), "{dir:?} frame {t}");
        }
    }
}

#[test]
fn teacher_forced_output_never_sees_later_ground_truth() {
    let model = AcousticModel::new(tiny_config(), 13).unwrap();
    let item = synthetic_item(&["K", "AE", "T"], &[3, 3, 3], 0);
    let base = teacher_forced(&model, &item, Direction::Forward);
    let mut data = item.mel.as_slice().to_vec();
    for v in &mut data[6 * N_MELS..7 * N_MELS] {
        *v += 0.5;
    }
    let mut changed = item.clone();
    changed.mel = MelSpectrogram::new(data, 9).unwrap();
    let out = teacher_forced(&model, &changed, Direction::Forward);
    for t in 0..=6 {
        assert_eq!(base.row(t), out.row(t));
    }
    assert_ne!(base.row(7), out.row(7));
}

#[test]
fn backward_decoder_mirrors_forward_with_shared_weights() {
    let mut model = AcousticModel::new(tiny_config(), 17).unwrap();
    let names: Vec<alloc::string::String> = model.params.iter().map(|(n, _)| n.into()).collect();
    for n in names.iter().filter(|n| n.starts_with("decoder_fwd")) {
        let src = model.params.get(model.params.id(n).unwrap()).clone();
        let dst = model.params.id(&n.replace("decoder_fwd", "decoder_bwd")).unwrap();
        *model.params.get_mut(dst) = src;
    }
    let hidden = Mat::from_vec(2, model.hidden_dim(), (0..2 * model.hidden_dim()).map(|i| (i as f64 * 0.7).sin()).collect());
    let mel = MelSpectrogram::new((0..2 * N_MELS).map(|i| (i as f64 * 0.05).cos() - 2.0).collect(), 2).unwrap();
    let mut rev_h = Mat::zeros(2, model.hidden_dim());
    rev_h.row_mut(0).copy_from_slice(hidden.row(1));
    rev_h.row_mut(1).copy_from_slice(hidden.row(0));
    let rev_mel = MelSpectrogram::from_frames([mel.frame(1), mel.frame(0)]).unwrap();

    let run = |h: &Mat, m: &MelSpectrogram, dir| {
        let mut g = crate::nn::Graph::new(&model.params);
        let hv = g.input(h.clone());
        let out = model.teacher_forced_graph(&mut g, hv, m, dir, None).unwrap();
        g.value(out).clone()
    };
    let fwd = run(&hidden, &mel, Direction::Forward);
    let bwd = run(&rev_h, &rev_mel, Direction::Backward);
    assert_eq!(fwd.row(0), bwd.row(1));
    assert_eq!(fwd.row(1), bwd.row(0));
}

#[test]
fn fresh_model_losses_are_finite_and_positive() {
    let model = AcousticModel::new(tiny_config(), 1).unwrap();
    let item = synthetic_item(&["HH", "AH", "L", "OW"], &[2, 3, 2, 3], 1);
    let l = model.losses(&[item], None).unwrap();
    assert!(l.forward.is_finite() && l.forward > 0.0);
    assert!(l.backward.is_finite() && l.backward > 0.0);
}

#[test]
fn batch_loss_is_permutation_invariant() {
    let model = AcousticModel::new(tiny_config(), 2).unwrap();
    let a = synthetic_item(&["HH", "AH"], &[2, 3], 0);
    let b = synthetic_item(&["W", "ER", "L", "D"], &[1, 2, 3, 2], 1);
    let ab = model.losses(&[a.clone(), b.clone()], None).unwrap();
    let ba = model.losses(&[b, a], None).unwrap();
    assert!((ab.forward - ba.forward).abs() < 1e-12);
    assert!((ab.backward - ba.backward).abs() < 1e-12);
}

#[test]
fn duration_loss_reference_points() {
    let d = [3usize, 7, 12];
    let perfect: Vec<f64> = d.iter().map(|x| libm::log(*x as f64)).collect();
    assert_eq!(duration_loss(&perfect, &d).unwrap(), 0.0);
    let scaled: Vec<f64> = d.iter().map(|x| (core::f64::consts::E * *x as f64).ln()).collect();
    assert!((duration_loss(&scaled, &d).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn durations_round_half_up_and_clamp() {
    assert_eq!(frames_from_log(0.0), 1);
    assert_eq!(frames_from_log(10.4f64.ln()), 10);
    assert_eq!(frames_from_log(10.5f64.ln() + 1e-12), 11);
    assert_eq!(frames_from_log(-5.0), 1);
    assert_eq!(frames_from_log(f64::NAN), 1);
}

#[test]
fn unshared_duration_model_has_own_embedding() {
    let cfg = ModelConfig { shared_encoder: false, ..tiny_config() };
    let models = Models::new(cfg, 4).unwrap();
    assert!(models.duration.params.id("duration.embedding").is_some());
    let seq = phones(&["HH", "AH", "L"]);
    assert_eq!(models.predict_durations(&seq).unwrap().len(), 3);
}

#[test]
fn training_is_bit_reproducible() {
    let corpus = [
        synthetic_item(&["HH", "AH", "L", "OW"], &[2, 3, 2, 3], 0),
        synthetic_item(&["W", "ER", "L", "D"], &[3, 2, 2, 2], 1),
    ];
    let run = || {
        let mut t = Trainer::new(tiny_config(), AdamConfig::default(), 42, 32).unwrap();
        let reports: Vec<StepReport> = (0..3).map(|_| t.step(&corpus).unwrap()).collect();
        (reports, t.models.acoustic.params, t.models.duration.params)
    };
    assert_eq!(run(), run());
}

#[test]
fn short_training_reduces_losses() {
    let corpus = [
        synthetic_item(&["HH", "AH", "L", "OW"], &[2, 3, 2, 3], 0),
        synthetic_item(&["W", "ER", "L", "D"], &[3, 2, 2, 2], 1),
    ];
    let mut t = Trainer::new(tiny_config(), AdamConfig::default(), 42, 32).unwrap();
    let first = t.step(&corpus).unwrap();
    let mut last = first;
    for _ in 0..40 {
        last = t.step(&corpus).unwrap();
    }
    assert!(last.acoustic.total() < first.acoustic.total());
    assert!(last.duration < first.duration);
    assert_eq!(t.step_count(), 41);
}

#[test]
fn batch_indices_cover_each_epoch() {
    let t = Trainer::new(tiny_config(), AdamConfig::default(), 42, 2).unwrap();
    let mut seen: Vec<usize> = (0..3).flat_map(|s| t.batch_indices(5, s)).collect();
    seen.sort_unstable();
    assert_eq!(seen, [0, 1, 2, 3, 4]);
    assert_eq!(t.batch_indices(2, 7), [0, 1]);
}

#[test]
fn phone_symbols_resolve() {
    assert_eq!(Phone::parse("sp").unwrap(), Phone::pause());
}
