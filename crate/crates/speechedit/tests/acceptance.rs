//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails. Runs without the libtest harness so the
//! lines are always shown and the timed criteria run alone.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use speechedit::commands::{self, Session, TrainOutcome};
use speechedit::config::RunConfig;
use speechedit::toy;
use speechedit_core::acoustic::{AcousticModel, ModelConfig, TrainingItem};
use speechedit_core::dsp::{mel_spectrogram, GriffinLim, MCEPSequence, MelSpectrogram, Waveform, N_MELS, SAMPLE_RATE};
use speechedit_core::editing::{
    delete_region, edit_utterance, refine_durations, select_fusion_point, EditOptions, PredictedSpan, RegionSplit, Utterance,
};
use speechedit_core::evaluation::{dtw, mcd, System, MCD_SCALE};
use speechedit_core::frontend::{locate_region, EditRequest, PhoneSequence};
use speechedit_core::rng::Rng;

const OVERFIT_STEPS: u64 = 500;
const OVERFIT_SCALE: f64 = 0.125;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Toy corpus trained once for the criteria that need a model.
struct Trained {
    _dir: tempfile::TempDir,
    cfg: RunConfig,
    train: TrainOutcome,
    elapsed: Duration,
}

fn train_toy() -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    toy::write_corpus(&root.join("data")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.rebase(root);
    cfg.manifest = root.join("data/manifest.jsonl");
    cfg.lexicon = root.join("data/lexicon.txt");
    cfg.alignments = root.join("data/alignments");
    cfg.model = ModelConfig::scaled(OVERFIT_SCALE);
    cfg.iterations = OVERFIT_STEPS;
    commands::prep(&cfg).unwrap();
    let start = Instant::now();
    let train = commands::train(&cfg, false, |_| {}).unwrap();
    Trained { _dir: dir, cfg, train, elapsed: start.elapsed() }
}

fn random_request(rng: &mut Rng, word_count: usize, vocab: &[String]) -> EditRequest {
    let text = |rng: &mut Rng| {
        let n = 1 + rng.below(3);
        (0..n).map(|_| vocab[rng.below(vocab.len())].clone()).collect::<Vec<_>>().join(" ")
    };
    match rng.below(3) {
        0 => {
            let pos = rng.below(word_count + 1);
            EditRequest::insert(pos, &text(rng))
        }
        1 => {
            let first = rng.below(word_count);
            let last = first + rng.below(word_count - first);
            EditRequest::replace(first, last, &text(rng))
        }
        _ => {
            let first = rng.below(word_count);
            let mut last = first + rng.below(word_count - first);
            if first == 0 && last == word_count - 1 {
                last -= 1;
            }
            EditRequest::delete(first, last)
        }
    }
}

fn bit_exactness(session: &Session) -> Outcome {
    let start = Instant::now();
    let vocab: Vec<String> = session.lexicon.words().map(str::to_string).collect();
    let mut rng = Rng::new(50);
    let mut checked_frames = 0usize;
    let mut failures = Vec::new();
    for k in 0..50 {
        let utt = &session.corpus.utterances[k % session.corpus.utterances.len()];
        let req = random_request(&mut rng, utt.alignment.word_count(), &vocab);
        let u = Utterance { mel: &utt.mel, alignment: &utt.alignment, speaker: utt.speaker };
        let result = match edit_utterance(session.checkpoint.models(), &u, &req, &session.lexicon, EditOptions::default()) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("edit {k} errored: {e}"));
                continue;
            }
        };
        let split = result.split;
        let modified = split.modified_rows();
        for row in 0..result.edited_mel.n_frames() {
            if modified.contains(&row) {
                continue;
            }
            let orig = if row < split.len_a { row } else { row + split.orig_len_b - split.len_b_edit };
            let same = result.edited_mel.frame(row).iter().zip(utt.mel.frame(orig)).all(|(a, b)| a.to_bits() == b.to_bits());
            checked_frames += 1;
            if !same {
                failures.push(format!("edit {k}: row {row} differs from original row {orig}"));
                break;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(120);
    outcome(pass, format!("50 edits, {checked_frames} unmodified frames compared, {elapsed:.1?} (limit 2 min) {}", failures.join("; ")))
}

fn span(rng: &mut Rng, start: usize, rows: usize) -> PredictedSpan {
    PredictedSpan::new(start, (0..rows * N_MELS).map(|_| rng.normal()).collect()).unwrap()
}

fn scan_fusion_oracle(fwd: &PredictedSpan, bwd: &PredictedSpan, split: &RegionSplit) -> (usize, usize) {
    let lo = split.len_a;
    let hi = split.len_a + split.len_b_edit;
    let dists: Vec<f64> = (lo..hi)
        .map(|r| fwd.row(r).unwrap().iter().zip(bwd.row(r).unwrap()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let first = dists.iter().position(|d| *d == min).unwrap();
    let ties = dists.iter().filter(|d| **d == min).count();
    (lo + first + 1, ties)
}

fn fusion_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(1000);
    let mut tie_cases = 0;
    let mut mismatches = 0;
    for case in 0..1000 {
        let split = RegionSplit::new(rng.below(6), 1 + rng.below(12), rng.below(6), 1 + rng.below(8)).unwrap();
        let fwd = span(&mut rng, 0, split.len_a + split.len_b_edit);
        let mut bwd_data = span(&mut rng, split.len_a, split.t_tot() - split.len_a).as_slice().to_vec();
        if case % 5 == 0 && split.len_b_edit >= 2 {
            // Two distinct modified rows where backward equals forward share
            // the minimal distance 0.
            let lb = split.len_b_edit;
            let r1 = rng.below(lb);
            let r2 = (r1 + 1 + rng.below(lb - 1)) % lb;
            for r in [r1, r2] {
                let row = fwd.row(split.len_a + r).unwrap().to_vec();
                bwd_data[r * N_MELS..(r + 1) * N_MELS].copy_from_slice(&row);
            }
        }
        let bwd = PredictedSpan::new(split.len_a, bwd_data).unwrap();
        let (expected, ties) = scan_fusion_oracle(&fwd, &bwd, &split);
        if ties > 1 {
            tie_cases += 1;
        }
        if select_fusion_point(&fwd, &bwd, &split).unwrap() != expected {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && tie_cases >= 50 && elapsed < Duration::from_secs(30);
    outcome(pass, format!("1000 pairs, {tie_cases} tie cases (need >= 50), {mismatches} mismatches, {elapsed:.1?} (limit 30 s)"))
}

fn refinement() -> Outcome {
    let mut rng = Rng::new(200);
    let mut failures = 0;
    let mut identity = 0;
    let mut degenerate = 0;
    let durations = |rng: &mut Rng, n: usize| (0..n).map(|_| 1 + rng.below(15)).collect::<Vec<usize>>();
    for case in 0..200 {
        let (na, nc) = match case % 20 {
            0 => (0, 0),
            _ => (rng.below(6), rng.below(6)),
        };
        let pred_a = durations(&mut rng, na);
        let pred_c = durations(&mut rng, nc);
        let (orig_a, orig_c) = if case % 20 == 1 { (pred_a.clone(), pred_c.clone()) } else { (durations(&mut rng, na), durations(&mut rng, nc)) };
        let nb = 1 + rng.below(6);
        let pred_b = durations(&mut rng, nb);
        let got = refine_durations(&orig_a, &orig_c, &pred_a, &pred_c, &pred_b);
        // s = (sum orig A + sum orig C) / (sum pred A + sum pred C); d' = floor(d * s + 1/2)
        let num: usize = orig_a.iter().chain(&orig_c).sum();
        let den: usize = pred_a.iter().chain(&pred_c).sum();
        if den == 0 {
            degenerate += 1;
        } else if num == den {
            identity += 1;
        }
        let expected: Vec<usize> = pred_b
            .iter()
            .map(|&d| {
                if den == 0 {
                    return d;
                }
                // Exact rational rounding: floor((2 d num + den) / (2 den)).
                ((2 * d * num + den) / (2 * den)).max(1)
            })
            .collect();
        if got != expected || got.iter().any(|&d| d < 1) {
            failures += 1;
        }
    }
    let pass = failures == 0 && identity > 0 && degenerate > 0;
    outcome(pass, format!("200 instances ({identity} with s = 1, {degenerate} with A = C = empty), {failures} mismatches"))
}

fn gradient_check() -> Outcome {
    let config = ModelConfig { scale_factor: 1.0 / 32.0, n_speakers: 2, ..Default::default() };
    let mut model = AcousticModel::new(config, 7).unwrap();
    let mut rng = Rng::new(77);
    let phones = PhoneSequence::from_symbols(&["HH", "AH", "sil", "L", "OW"], vec![0, 0, 0, 1, 1]).unwrap();
    let durations = vec![2, 3, 1, 2, 3];
    let frames: usize = durations.iter().sum();
    let mel = MelSpectrogram::new((0..frames * N_MELS).map(|_| rng.normal() - 4.0).collect(), frames).unwrap();
    let batch = [TrainingItem { phones, durations, mel, speaker: 1 }];
    let (_, grads) = model.loss_and_grads(&batch, None).unwrap();
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        let n = model.params.get(id).data().len();
        let analytic = grads.get(id).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        for _ in 0..3 {
            let k = rng.below(n);
            let orig = model.params.get(id).data()[k];
            model.params.get_mut(id).data_mut()[k] = orig + eps;
            let up = model.losses(&batch, None).unwrap().total();
            model.params.get_mut(id).data_mut()[k] = orig - eps;
            let down = model.losses(&batch, None).unwrap().total();
            model.params.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let scale = analytic[k].abs().max(numeric.abs());
            // Entries whose gradient is below the finite-difference noise
            // floor cannot carry a meaningful relative error.
            if scale < 1e-6 {
                continue;
            }
            worst = worst.max((analytic[k] - numeric).abs() / scale);
            probes += 1;
        }
    }
    outcome(worst < 1e-3 && probes > 20, format!("{probes} probes, eps 1e-4, worst relative error {worst:.2e} (limit 1e-3)"))
}

fn overfit(t: &Trained) -> Outcome {
    let last = t.train.last.expect("training ran");
    let l = last.acoustic.total();
    let pass = l < 0.1 && last.duration < 0.05 && t.elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "{} steps at scale {OVERFIT_SCALE}: L_fwd + L_bwd = {l:.4} (< 0.1), duration loss {:.4} (< 0.05), {:.1?} (limit 10 min)",
            last.step, last.duration, t.elapsed
        ),
    )
}

fn ordering(t: &Trained, session: &Session) -> Outcome {
    let mut cfg = t.cfg.clone();
    cfg.output = t.cfg.output.join("ordering");
    let report = commands::eval(session, &cfg, &[System::Proposed, System::Baseline1, System::Baseline2]).unwrap().report;
    let p = report.system(System::Proposed).unwrap();
    let b1 = report.system(System::Baseline1).unwrap();
    let b2 = report.system(System::Baseline2).unwrap();
    let pass = p.mcd_whole < b1.mcd_whole && p.mcd_unmodified == 0.0 && b2.mcd_unmodified == 0.0 && b1.mcd_unmodified > 0.0;
    outcome(
        pass,
        format!(
            "whole: proposed {:.3} < baseline1 {:.3}; unmodified: proposed {} = baseline2 {} = 0 < baseline1 {:.3}",
            p.mcd_whole, b1.mcd_whole, p.mcd_unmodified, b2.mcd_unmodified, b1.mcd_unmodified
        ),
    )
}

fn random_mcep(rng: &mut Rng, n: usize) -> MCEPSequence {
    MCEPSequence::new((0..n * 13).map(|_| rng.normal()).collect(), n).unwrap()
}

fn frame_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Memoized recursion `D(i, j) = d(i, j) + min(D(i-1, j), D(i, j-1), D(i-1, j-1))`.
fn dtw_oracle(x: &MCEPSequence, y: &MCEPSequence) -> f64 {
    fn go(i: usize, j: usize, x: &MCEPSequence, y: &MCEPSequence, memo: &mut Vec<Vec<Option<f64>>>) -> f64 {
        if let Some(v) = memo[i][j] {
            return v;
        }
        let d = frame_dist(x.frame(i), y.frame(j));
        let v = match (i, j) {
            (0, 0) => d,
            (0, _) => d + go(0, j - 1, x, y, memo),
            (_, 0) => d + go(i - 1, 0, x, y, memo),
            _ => d + go(i - 1, j, x, y, memo).min(go(i, j - 1, x, y, memo)).min(go(i - 1, j - 1, x, y, memo)),
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; y.n_frames()]; x.n_frames()];
    go(x.n_frames() - 1, y.n_frames() - 1, x, y, &mut memo)
}

fn dtw_criterion() -> Outcome {
    let mut rng = Rng::new(12);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (n, m) = (1 + rng.below(12), 1 + rng.below(15));
        let x = random_mcep(&mut rng, n);
        let y = random_mcep(&mut rng, m);
        let got = dtw(&x, &y).unwrap().total_cost;
        let want = dtw_oracle(&x, &y);
        worst = worst.max((got - want).abs() / want.max(1.0));
    }
    let x = random_mcep(&mut rng, 10);
    let id = dtw(&x, &x).unwrap();
    let diagonal = id.pairs == (0..10).map(|i| (i, i)).collect::<Vec<_>>();
    let pass = worst < 1e-12 && diagonal && id.total_cost == 0.0;
    outcome(pass, format!("200 pairs up to 12x15, worst relative cost error {worst:.1e}; identity diagonal {diagonal}, cost {}", id.total_cost))
}

fn mcd_closed_form() -> Outcome {
    let mut rng = Rng::new(26);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 1 + rng.below(20);
        let k = rng.range(-3.0, 3.0);
        let x = random_mcep(&mut rng, n);
        let y = MCEPSequence::new(x.frames().flat_map(|f| f.iter().map(|v| v + k).collect::<Vec<_>>()).collect(), n).unwrap();
        let want = 10.0 / std::f64::consts::LN_10 * k.abs() * 26f64.sqrt();
        worst = worst.max((mcd(&x, &y, true).unwrap() - want).abs());
    }
    let x = random_mcep(&mut rng, 7);
    let zero = mcd(&x, &x, true).unwrap();
    let scale_ok = (MCD_SCALE - 10.0 / std::f64::consts::LN_10).abs() < 1e-15;
    outcome(worst < 1e-9 && zero == 0.0 && scale_ok, format!("constant offset worst error {worst:.1e} (limit 1e-9); MCD(x, x) = {zero}"))
}

fn deletions(session: &Session) -> Outcome {
    let mut rng = Rng::new(100);
    let mut failures = Vec::new();
    for k in 0..100 {
        let utt = &session.corpus.utterances[rng.below(session.corpus.utterances.len())];
        let w = utt.alignment.word_count();
        let first = rng.below(w);
        let mut last = first + rng.below(w - first);
        if first == 0 && last == w - 1 {
            last -= 1;
        }
        let req = EditRequest::delete(first, last);
        let u = Utterance { mel: &utt.mel, alignment: &utt.alignment, speaker: utt.speaker };
        let range = locate_region(&utt.alignment, &req).unwrap().frames;
        let out = edit_utterance(session.checkpoint.models(), &u, &req, &session.lexicon, EditOptions::default()).unwrap();
        let t = utt.mel.n_frames();
        let edited = &out.edited_mel;
        let mut expected: Vec<f64> = utt.mel.as_slice()[..range.start * N_MELS].to_vec();
        expected.extend_from_slice(&utt.mel.as_slice()[range.end * N_MELS..]);
        let bit_exact = edited.as_slice().len() == expected.len()
            && edited.as_slice().iter().zip(&expected).all(|(a, b)| a.to_bits() == b.to_bits());
        let direct = delete_region(&utt.mel, range.clone()).unwrap();
        if edited.n_frames() != t - range.len() || !bit_exact || direct.as_slice() != edited.as_slice() {
            failures.push(format!("deletion {k} of words {first}..={last}"));
        }
    }
    outcome(failures.is_empty(), format!("100 deletions, {} failures {}", failures.len(), failures.join("; ")))
}

fn log_mel_mae(a: &MelSpectrogram, b: &MelSpectrogram) -> f64 {
    let n = a.n_frames().min(b.n_frames());
    let s: f64 = (0..n).flat_map(|t| a.frame(t).iter().zip(b.frame(t)).map(|(x, y)| (x - y).abs())).sum();
    s / (n * N_MELS) as f64
}

fn griffin_lim() -> Outcome {
    let tone: Vec<f64> = (0..SAMPLE_RATE as usize).map(|i| 0.5 * (TAU * 440.0 * i as f64 / SAMPLE_RATE as f64).sin()).collect();
    let wave = Waveform::from_unclamped(tone, SAMPLE_RATE).unwrap();
    let mel = mel_spectrogram(&wave).unwrap();
    let mae = |iters| log_mel_mae(&mel, &mel_spectrogram(&GriffinLim::new(iters).run(&mel).unwrap()).unwrap());
    let (m1, m60) = (mae(1), mae(60));
    outcome(m60 < 0.5 && m60 <= m1, format!("1 s 440 Hz tone: MAE 1 iter {m1:.4}, 60 iters {m60:.4} (limit 0.5, non-increasing)"))
}

fn determinism(t: &Trained) -> Outcome {
    let run = |name: &str| {
        let mut cfg = t.cfg.clone();
        cfg.output = t.cfg.output.join(name);
        let session = Session::open(&cfg, None).unwrap();
        let o = commands::eval(&session, &cfg, &System::ALL).unwrap();
        (std::fs::read(&o.json).unwrap(), std::fs::read(&o.table).unwrap())
    };
    let (j1, t1) = run("det-a");
    let (j2, t2) = run("det-b");
    outcome(j1 == j2 && t1 == t2, format!("eval report twice: json {} bytes identical {}, table identical {}", j1.len(), j1 == j2, t1 == t2))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail.trim_end());
        results.push((name, o));
    };
    record("fusion oracle", fusion_oracle());
    record("duration refinement", refinement());
    record("gradient check", gradient_check());
    record("dtw oracle", dtw_criterion());
    record("mcd closed form", mcd_closed_form());
    record("griffin-lim regression", griffin_lim());
    let trained = train_toy();
    record("overfit", overfit(&trained));
    let session = Session::open(&trained.cfg, None).unwrap();
    record("bit-exactness", bit_exactness(&session));
    record("deletion arithmetic", deletions(&session));
    record("ordering trend", ordering(&trained, &session));
    record("determinism", determinism(&trained));
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
