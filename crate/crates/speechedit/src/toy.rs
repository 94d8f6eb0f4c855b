//! Deterministic two-utterance toy corpus synthesized from per-phone
//! spectral recipes. Alignments are exact by construction, so no external
//! aligner is needed to exercise the full pipeline.

use std::f64::consts::TAU;
use std::path::Path;

use speechedit_core::dsp::{Waveform, HOP_SAMPLES, SAMPLE_RATE};
use speechedit_core::frontend::{g2p, Alignment, Lexicon, Phone, PhoneSequence};

use crate::audio::write_wav;
use crate::corpus::{write_alignment, write_manifest, UtteranceRecord};
use crate::fsutil::write_atomic;
use crate::Result;

pub const TOY_LEXICON: &str = "\
A AH
BIG B IH G
BLUE B L UW
BRIGHT B R AY T
CAT K AE T
DOG D AO G
FAR F AA R
FISH F IH SH
GREEN G R IY N
HELLO HH AH L OW
IN IH N
IS IH Z
MAT M AE T
NOW N AW
ON AA N
PLANET P L AE N IH T
RAN R AE N
RED R EH D
SAT S AE T
SEE S IY
SMALL S M AO L
SUN S AH N
SWIMS S W IH M Z
THE DH AH
WE W IY
WELL W EH L
WORLD W ER L D
";

pub const TOY_SPEAKER: &str = "spk0";

pub const TOY_UTTERANCES: [(&str, &str); 2] = [
    ("toy-001", "the red cat sat, on a mat"),
    ("toy-002", "a big dog ran far, in the sun"),
];

const F0: f64 = 120.0;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Source {
    Voiced,
    /// Band of fixed inharmonic partials between the two edges (Hz).
    Frication(f64, f64),
    Silent,
}

#[derive(Clone, Copy, Debug)]
struct Recipe {
    formants: [f64; 3],
    source: Source,
    /// Extra voicing under frication (voiced fricatives).
    voicing: f64,
    gain: f64,
    /// Stops: fraction of the phone spent in closure before the burst.
    closure: f64,
    frames: usize,
}

fn recipe(phone: Phone) -> Recipe {
    let vowel = |f1, f2, f3| Recipe { formants: [f1, f2, f3], source: Source::Voiced, voicing: 0.0, gain: 1.0, closure: 0.0, frames: 8 };
    let sonorant = |f1, f2, f3, gain| Recipe { formants: [f1, f2, f3], source: Source::Voiced, voicing: 0.0, gain, closure: 0.0, frames: 5 };
    let fric = |lo, hi, voicing, gain| Recipe { formants: [0.0; 3], source: Source::Frication(lo, hi), voicing, gain, closure: 0.0, frames: 5 };
    let stop = |lo, hi, voicing| Recipe { formants: [0.0; 3], source: Source::Frication(lo, hi), voicing, gain: 0.5, closure: 0.5, frames: 5 };
    match phone.symbol() {
        "AA" => vowel(730.0, 1090.0, 2440.0),
        "AE" => vowel(660.0, 1720.0, 2410.0),
        "AH" => vowel(640.0, 1190.0, 2390.0),
        "AO" => vowel(570.0, 840.0, 2410.0),
        "AW" => vowel(700.0, 1000.0, 2400.0),
        "AY" => vowel(700.0, 1500.0, 2500.0),
        "EH" => vowel(530.0, 1840.0, 2480.0),
        "ER" => vowel(490.0, 1350.0, 1690.0),
        "EY" => vowel(480.0, 2100.0, 2700.0),
        "IH" => vowel(390.0, 1990.0, 2550.0),
        "IY" => vowel(270.0, 2290.0, 3010.0),
        "OW" => vowel(500.0, 900.0, 2400.0),
        "OY" => vowel(550.0, 1200.0, 2500.0),
        "UH" => vowel(440.0, 1020.0, 2240.0),
        "UW" => vowel(300.0, 870.0, 2240.0),
        "M" => sonorant(250.0, 1000.0, 2200.0, 0.5),
        "N" => sonorant(250.0, 1700.0, 2600.0, 0.5),
        "NG" => sonorant(250.0, 2300.0, 2800.0, 0.5),
        "L" => sonorant(360.0, 1300.0, 2900.0, 0.7),
        "R" => sonorant(420.0, 1300.0, 1600.0, 0.7),
        "W" => sonorant(300.0, 610.0, 2200.0, 0.7),
        "Y" => sonorant(280.0, 2250.0, 2900.0, 0.7),
        "S" => fric(4500.0, 7800.0, 0.0, 0.4),
        "Z" => fric(4500.0, 7800.0, 0.3, 0.4),
        "SH" => fric(2200.0, 5000.0, 0.0, 0.4),
        "ZH" => fric(2200.0, 5000.0, 0.3, 0.4),
        "F" | "TH" => fric(1500.0, 7500.0, 0.0, 0.15),
        "V" | "DH" => fric(1500.0, 7500.0, 0.3, 0.15),
        "HH" => fric(500.0, 3500.0, 0.0, 0.2),
        "CH" | "JH" => fric(2000.0, 6000.0, 0.2, 0.4),
        "P" => stop(500.0, 2500.0, 0.0),
        "B" => stop(500.0, 2500.0, 0.15),
        "T" => stop(3000.0, 7000.0, 0.0),
        "D" => stop(3000.0, 7000.0, 0.15),
        "K" => stop(1500.0, 3500.0, 0.0),
        "G" => stop(1500.0, 3500.0, 0.15),
        _ => Recipe { formants: [0.0; 3], source: Source::Silent, voicing: 0.0, gain: 0.0, closure: 0.0, frames: 6 },
    }
}

/// Frame count used for `phone` in the toy corpus.
pub fn phone_frames(phone: Phone) -> usize {
    recipe(phone).frames
}

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    let bw = [90.0, 110.0, 170.0];
    let peaks: f64 = formants
        .iter()
        .zip(bw)
        .map(|(fc, b)| 1.0 / (1.0 + ((f - fc) / b).powi(2)))
        .sum();
    // Spectral tilt keeps upper harmonics audible but weaker.
    (0.05 + peaks) / (1.0 + f / 1500.0)
}

/// Fixed pseudo-random partial frequencies inside a band.
fn partials(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let n = 48;
    (0..n)
        .map(|i| {
            let u = ((i as f64 * 0.618_033_988_75).fract() + 0.5 * (i as f64 / n as f64)).fract();
            let phase = ((i * 7919) % 1000) as f64 / 1000.0 * TAU;
            (lo + (hi - lo) * u, phase)
        })
        .collect()
}

fn phone_sample(r: &Recipe, t: f64, local: f64) -> f64 {
    let voiced = |gain: f64, formants: &[f64; 3]| -> f64 {
        let n_harm = (7900.0 / F0) as usize;
        (1..=n_harm)
            .map(|k| {
                let f = k as f64 * F0;
                formant_gain(f, formants) * (TAU * f * t).sin()
            })
            .sum::<f64>()
            * gain
    };
    match r.source {
        Source::Silent => 0.0,
        Source::Voiced => 0.12 * voiced(r.gain, &r.formants),
        Source::Frication(lo, hi) => {
            if local < r.closure {
                return 0.12 * voiced(r.voicing * 0.3, &[250.0, 1000.0, 2500.0]);
            }
            let noise: f64 = partials(lo, hi).iter().map(|(f, p)| (TAU * f * t + p).sin()).sum::<f64>() / 48f64.sqrt();
            let voicing = if r.voicing > 0.0 { 0.12 * voiced(r.voicing, &[300.0, 1200.0, 2500.0]) } else { 0.0 };
            0.25 * r.gain * noise + voicing
        }
    }
}

/// Renders phones with the given frame durations. Output length is
/// `sum(durations) * hop - 1` so the mel has exactly `sum(durations)` frames.
pub fn synthesize(phones: &PhoneSequence, durations: &[usize]) -> Result<Waveform> {
    let total: usize = durations.iter().sum();
    let n = total * HOP_SAMPLES - 1;
    let fade = (0.005 * SAMPLE_RATE as f64) as usize;
    let mut out = vec![0.0f64; n];
    let mut start = 0usize;
    for (phone, dur) in phones.phones().iter().zip(durations) {
        let r = recipe(*phone);
        let len = dur * HOP_SAMPLES;
        let lo = start.saturating_sub(fade);
        let hi = (start + len + fade).min(n);
        for (i, slot) in out.iter_mut().enumerate().take(hi).skip(lo) {
            let rel = i as f64 - start as f64;
            let w_in = ((rel + fade as f64) / (2 * fade) as f64).clamp(0.0, 1.0);
            let w_out = ((len as f64 + fade as f64 - rel) / (2 * fade) as f64).clamp(0.0, 1.0);
            let w = w_in.min(w_out);
            if w <= 0.0 {
                continue;
            }
            let t = i as f64 / SAMPLE_RATE as f64;
            let local = (rel / len as f64).clamp(0.0, 1.0);
            *slot += w * phone_sample(&r, t, local);
        }
        start += len;
    }
    Ok(Waveform::from_unclamped(out, SAMPLE_RATE)?)
}

/// One generated utterance.
#[derive(Clone, Debug)]
pub struct ToyUtterance {
    pub record: UtteranceRecord,
    pub alignment: Alignment,
    pub waveform: Waveform,
}

pub fn lexicon() -> Lexicon {
    Lexicon::parse(TOY_LEXICON).expect("toy lexicon parses")
}

pub fn utterances() -> Result<Vec<ToyUtterance>> {
    let lex = lexicon();
    TOY_UTTERANCES
        .iter()
        .map(|(id, text)| {
            let phones = g2p(text, &lex)?;
            let durations: Vec<usize> = phones.phones().iter().map(|p| phone_frames(*p)).collect();
            let alignment = Alignment::from_durations(id.to_string(), &phones, &durations)?;
            let waveform = synthesize(&phones, &durations)?;
            let record = UtteranceRecord {
                id: id.to_string(),
                audio_path: format!("wavs/{id}.wav"),
                text: text.to_string(),
                speaker_id: TOY_SPEAKER.to_string(),
            };
            Ok(ToyUtterance { record, alignment, waveform })
        })
        .collect()
}

/// Writes the toy corpus as `manifest.jsonl`, `lexicon.txt`, `wavs/*.wav`
/// and `alignments/*.json` under `dir`.
pub fn write_corpus(dir: &Path) -> Result<Vec<ToyUtterance>> {
    let utts = utterances()?;
    for u in &utts {
        write_wav(&dir.join(&u.record.audio_path), &u.waveform)?;
        write_alignment(&dir.join("alignments").join(format!("{}.json", u.record.id)), &u.alignment)?;
    }
    let records: Vec<UtteranceRecord> = utts.iter().map(|u| u.record.clone()).collect();
    write_manifest(&dir.join("manifest.jsonl"), &records)?;
    write_atomic(&dir.join("lexicon.txt"), TOY_LEXICON.as_bytes())?;
    Ok(utts)
}
