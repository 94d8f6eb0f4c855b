//! Manifest, lexicon and alignment loading, and the prepared feature cache.
//!
//! Cache layout under the cache directory:
//!
//! ```text
//! corpus.json             index: utterances (id, text, speaker) and speakers
//! mels/<id>.mel, .json    log-mel payload and sidecar
//! alignments/<id>.json    validated alignment
//! audio/<id>.wav          original audio as ingested
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speechedit_core::acoustic::TrainingItem;
use speechedit_core::dsp::{mel_spectrogram, MelSpectrogram};
use speechedit_core::evaluation::EvalUtterance;
use speechedit_core::frontend::{g2p, Alignment, Lexicon};

use crate::audio::{read_wav, write_wav};
use crate::fsutil::{read_json, read_string, write_json};
use crate::melfile::{read_mel, write_mel};
use crate::{Error, Result};

/// One line of the JSONL manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub audio_path: String,
    pub text: String,
    pub speaker_id: String,
}

/// Parses a JSONL manifest; errors carry the line number.
pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<UtteranceRecord>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: UtteranceRecord =
            serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        if rec.id.is_empty() || rec.id.contains(['/', '\\']) || rec.id.starts_with('.') {
            return Err(Error::format(path, format!("line {}: invalid utterance id {:?}", n + 1, rec.id)));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::format(path, format!("line {}: duplicate utterance id {:?}", n + 1, rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<UtteranceRecord>> {
    parse_manifest(&read_string(path)?, path)
}

pub fn write_manifest(path: &Path, records: &[UtteranceRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::Internal(e.to_string()))?);
        text.push('\n');
    }
    crate::fsutil::write_atomic(path, text.as_bytes())
}

pub fn read_lexicon(path: &Path) -> Result<Lexicon> {
    Lexicon::parse(&read_string(path)?).map_err(|e| Error::format(path, e))
}

pub fn read_alignment(path: &Path) -> Result<Alignment> {
    read_json(path)
}

pub fn write_alignment(path: &Path, alignment: &Alignment) -> Result<()> {
    write_json(path, alignment)
}

/// Index stored at the cache root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub utterances: Vec<IndexEntry>,
    /// Speaker ids; a speaker's model index is its position here.
    pub speakers: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub text: String,
    pub speaker_id: String,
    pub frames: usize,
    pub samples: usize,
}

/// A prepared utterance loaded from the cache.
#[derive(Clone, Debug)]
pub struct PreparedUtterance {
    pub entry: IndexEntry,
    pub speaker: usize,
    pub mel: MelSpectrogram,
    pub alignment: Alignment,
}

impl PreparedUtterance {
    pub fn training_item(&self) -> TrainingItem {
        TrainingItem {
            phones: self.alignment.phone_sequence(),
            durations: self.alignment.durations(),
            mel: self.mel.clone(),
            speaker: self.speaker,
        }
    }

    pub fn eval_utterance(&self) -> EvalUtterance {
        EvalUtterance { id: self.entry.id.clone(), mel: self.mel.clone(), alignment: self.alignment.clone(), speaker: self.speaker }
    }
}

/// The prepared corpus, ordered by utterance id.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    pub speakers: Vec<String>,
    pub utterances: Vec<PreparedUtterance>,
}

pub fn mel_path(cache: &Path, id: &str) -> PathBuf {
    cache.join("mels").join(format!("{id}.mel"))
}

pub fn alignment_path(cache: &Path, id: &str) -> PathBuf {
    cache.join("alignments").join(format!("{id}.json"))
}

pub fn audio_path(cache: &Path, id: &str) -> PathBuf {
    cache.join("audio").join(format!("{id}.wav"))
}

impl Corpus {
    pub fn load(cache: &Path) -> Result<Corpus> {
        let index: CorpusIndex = read_json(&cache.join("corpus.json"))?;
        let mut utterances = Vec::with_capacity(index.utterances.len());
        for entry in index.utterances {
            let speaker = index
                .speakers
                .iter()
                .position(|s| *s == entry.speaker_id)
                .ok_or_else(|| Error::format(cache.join("corpus.json"), format!("unknown speaker {:?}", entry.speaker_id)))?;
            let mel = read_mel(&mel_path(cache, &entry.id))?;
            let alignment = read_alignment(&alignment_path(cache, &entry.id))?;
            if alignment.total_frames != mel.n_frames() {
                return Err(Error::format(
                    alignment_path(cache, &entry.id),
                    format!("{} frames but mel has {}", alignment.total_frames, mel.n_frames()),
                ));
            }
            utterances.push(PreparedUtterance { entry, speaker, mel, alignment });
        }
        utterances.sort_by(|a, b| a.entry.id.cmp(&b.entry.id));
        Ok(Corpus { root: cache.to_path_buf(), speakers: index.speakers, utterances })
    }

    pub fn get(&self, id: &str) -> Result<&PreparedUtterance> {
        self.utterances
            .iter()
            .find(|u| u.entry.id == id)
            .ok_or_else(|| Error::NotFound(format!("utterance {id:?}")))
    }

    pub fn training_items(&self) -> Vec<TrainingItem> {
        self.utterances.iter().map(|u| u.training_item()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrepSummary {
    pub utterances: usize,
    pub speakers: usize,
    pub frames: usize,
}

/// Validates every record against its audio, transcript and alignment and
/// writes the feature cache. Any bad record aborts with a diagnostic naming
/// the utterance and file.
pub fn prepare(manifest: &Path, lexicon: &Path, alignments: &Path, cache: &Path) -> Result<PrepSummary> {
    let records = read_manifest(manifest)?;
    let lex = read_lexicon(lexicon)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::with_capacity(records.len());
    let mut speakers = BTreeSet::new();
    let mut frames = 0;
    for rec in &records {
        let phones = g2p(&rec.text, &lex).map_err(|e| Error::format(manifest, format!("utterance {}: {e}", rec.id)))?;
        let apath = alignments.join(format!("{}.json", rec.id));
        let alignment = read_alignment(&apath)?;
        if alignment.utterance_id != rec.id {
            return Err(Error::format(&apath, format!("alignment is for {:?}, expected {:?}", alignment.utterance_id, rec.id)));
        }
        if alignment.phone_sequence() != phones {
            return Err(Error::format(
                &apath,
                format!(
                    "phones {:?} do not match transcript phones {:?}",
                    alignment.phone_sequence().symbols(),
                    phones.symbols()
                ),
            ));
        }
        let wav_path = base.join(&rec.audio_path);
        let wave = read_wav(&wav_path)?;
        let mel = mel_spectrogram(&wave).map_err(|e| Error::format(&wav_path, e))?;
        if mel.n_frames() != alignment.total_frames {
            return Err(Error::format(
                &apath,
                format!("alignment covers {} frames, audio yields {}", alignment.total_frames, mel.n_frames()),
            ));
        }
        write_mel(&mel_path(cache, &rec.id), &mel)?;
        write_alignment(&alignment_path(cache, &rec.id), &alignment)?;
        write_wav(&audio_path(cache, &rec.id), &wave)?;
        frames += mel.n_frames();
        speakers.insert(rec.speaker_id.clone());
        entries.push(IndexEntry {
            id: rec.id.clone(),
            text: rec.text.clone(),
            speaker_id: rec.speaker_id.clone(),
            frames: mel.n_frames(),
            samples: wave.len(),
        });
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let index = CorpusIndex { utterances: entries, speakers: speakers.into_iter().collect() };
    write_json(&cache.join("corpus.json"), &index)?;
    std::fs::copy(lexicon, cache.join("lexicon.txt")).map_err(|e| Error::io(lexicon, e))?;
    Ok(PrepSummary { utterances: index.utterances.len(), speakers: index.speakers.len(), frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_errors_name_the_line() {
        let p = Path::new("m.jsonl");
        let ok = "{\"id\":\"a\",\"audio_path\":\"a.wav\",\"text\":\"hi\",\"speaker_id\":\"s\"}\n\n";
        assert_eq!(parse_manifest(ok, p).unwrap().len(), 1);
        let bad = format!("{ok}{{\"id\":\"b\"}}\n");
        let err = parse_manifest(&bad, p).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let dup = format!("{ok}{ok}");
        assert!(parse_manifest(&dup, p).unwrap_err().to_string().contains("duplicate"));
        let traversal = ok.replace("\"a\"", "\"../x\"");
        assert!(parse_manifest(&traversal, p).is_err());
    }
}
