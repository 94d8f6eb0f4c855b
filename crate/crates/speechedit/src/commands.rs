//! Library entry points behind the CLI subcommands.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speechedit_core::acoustic::{mean_frame, StepReport, Trainer};
use speechedit_core::editing::{edit_utterance, EditOptions, EditReport, Utterance};
use speechedit_core::evaluation::{masked_reconstruction, EvalLevel, EvaluationReport, System};
use speechedit_core::frontend::EditRequest;

use crate::audio::write_wav;
use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::corpus::{self, read_lexicon, Corpus, PrepSummary};
use crate::fsutil::{write_atomic, write_json};
use crate::melfile::write_mel;
use crate::{Error, Result};

pub fn prep(cfg: &RunConfig) -> Result<PrepSummary> {
    corpus::prepare(&cfg.manifest, &cfg.lexicon, &cfg.alignments, &cfg.cache)
}

/// Header of the loss curve CSV.
pub const LOSS_CSV_HEADER: &str = "step,loss_forward,loss_backward,loss_total,loss_duration";

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Option<StepReport>,
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub resumed_from: Option<u64>,
}

/// Starts a trainer from `cfg`, or resumes from the latest checkpoint when
/// `resume` is set and one exists.
pub fn trainer_for(cfg: &RunConfig, corpus: &Corpus, resume: bool) -> Result<(Trainer, Option<u64>)> {
    let latest = cfg.latest_checkpoint();
    if resume && latest.exists() {
        let ckpt = checkpoint::load(&latest)?;
        if ckpt.speakers != corpus.speakers {
            return Err(Error::Config(format!("checkpoint speakers {:?} differ from corpus {:?}", ckpt.speakers, corpus.speakers)));
        }
        let step = ckpt.trainer.step_count();
        return Ok((ckpt.trainer, Some(step)));
    }
    let mut model = cfg.model.clone();
    model.n_speakers = corpus.speakers.len().max(1);
    let mut trainer = Trainer::new(model, cfg.optimizer.clone(), cfg.seed, cfg.batch_size)?;
    if cfg.init_output_bias {
        let mean = mean_frame(&corpus.training_items())?;
        trainer.models.acoustic.set_output_bias(&mean)?;
    }
    Ok((trainer, None))
}

fn save_checkpoint(cfg: &RunConfig, trainer: &Trainer, speakers: &[String]) -> Result<PathBuf> {
    let ckpt = Checkpoint { trainer: trainer.clone(), speakers: speakers.to_vec() };
    let bytes = checkpoint::encode(&ckpt)?;
    let step = trainer.step_count();
    write_atomic(&cfg.checkpoints.join(format!("step-{step:06}.ckpt")), &bytes)?;
    let latest = cfg.latest_checkpoint();
    write_atomic(&latest, &bytes)?;
    Ok(latest)
}

/// Trains until `cfg.iterations` total steps. Each step is appended to the
/// loss CSV and passed to `progress`. A non-finite loss stops training and
/// leaves the last saved checkpoint untouched.
pub fn train(cfg: &RunConfig, resume: bool, mut progress: impl FnMut(&StepReport)) -> Result<TrainOutcome> {
    let corpus = Corpus::load(&cfg.cache)?;
    if corpus.utterances.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let items = corpus.training_items();
    let (mut trainer, resumed_from) = trainer_for(cfg, &corpus, resume)?;
    std::fs::create_dir_all(&cfg.checkpoints).map_err(|e| Error::io(&cfg.checkpoints, e))?;
    let loss_csv = cfg.checkpoints.join("loss.csv");
    let mut csv = if resumed_from.is_some() && loss_csv.exists() {
        OpenOptions::new().append(true).open(&loss_csv).map_err(|e| Error::io(&loss_csv, e))?
    } else {
        let mut f = std::fs::File::create(&loss_csv).map_err(|e| Error::io(&loss_csv, e))?;
        writeln!(f, "{LOSS_CSV_HEADER}").map_err(|e| Error::io(&loss_csv, e))?;
        f
    };
    let mut last = None;
    let mut checkpoint_path = cfg.latest_checkpoint();
    while trainer.step_count() < cfg.iterations {
        let report = trainer.step(&items).map_err(|e| match e {
            speechedit_core::Error::NonFinite(what) => Error::Diverged(format!(
                "{what}; last good checkpoint kept at {}",
                cfg.latest_checkpoint().display()
            )),
            other => Error::Core(other),
        })?;
        writeln!(
            csv,
            "{},{},{},{},{}",
            report.step,
            report.acoustic.forward,
            report.acoustic.backward,
            report.acoustic.total(),
            report.duration
        )
        .map_err(|e| Error::io(&loss_csv, e))?;
        progress(&report);
        last = Some(report);
        if cfg.checkpoint_every > 0 && report.step % cfg.checkpoint_every == 0 {
            checkpoint_path = save_checkpoint(cfg, &trainer, &corpus.speakers)?;
        }
    }
    if last.is_some() || !checkpoint_path.exists() {
        checkpoint_path = save_checkpoint(cfg, &trainer, &corpus.speakers)?;
    }
    Ok(TrainOutcome { last, checkpoint: checkpoint_path, loss_csv, resumed_from })
}

/// Loaded models with the corpus and lexicon they operate on.
pub struct Session {
    pub checkpoint: Checkpoint,
    pub checksum: String,
    pub corpus: Corpus,
    pub lexicon: speechedit_core::frontend::Lexicon,
}

impl Session {
    pub fn open(cfg: &RunConfig, checkpoint_path: Option<&Path>) -> Result<Session> {
        let path = checkpoint_path.map(Path::to_path_buf).unwrap_or_else(|| cfg.latest_checkpoint());
        let bytes = crate::fsutil::read(&path)?;
        let checkpoint = checkpoint::decode(&bytes, &path)?;
        let corpus = Corpus::load(&cfg.cache)?;
        let lexicon = read_lexicon(&cfg.cache.join("lexicon.txt"))?;
        for s in &corpus.speakers {
            if !checkpoint.speakers.contains(s) {
                return Err(Error::Config(format!("speaker {s:?} is unknown to the checkpoint")));
            }
        }
        Ok(Session { checksum: checkpoint::checksum(&bytes), checkpoint, corpus, lexicon })
    }

    /// Model speaker index for a corpus speaker id.
    pub fn speaker_index(&self, speaker_id: &str) -> Result<usize> {
        self.checkpoint
            .speakers
            .iter()
            .position(|s| s == speaker_id)
            .ok_or_else(|| Error::Core(speechedit_core::Error::UnknownSpeaker(speaker_id.into())))
    }
}

/// Files written by [`edit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditOutcome {
    pub report: EditReport,
    pub wav: PathBuf,
    pub mel: PathBuf,
    pub diagnostics: PathBuf,
}

/// Applies `request` to utterance `id` and writes `out_wav`, the edited mel
/// next to it (`.mel` + `.json` sidecar) and `<stem>.report.json`.
pub fn edit(session: &Session, cfg: &RunConfig, id: &str, request: &EditRequest, out_wav: &Path) -> Result<EditOutcome> {
    let utt = session.corpus.get(id)?;
    let speaker = session.speaker_index(&utt.entry.speaker_id)?;
    let u = Utterance { mel: &utt.mel, alignment: &utt.alignment, speaker };
    let result = edit_utterance(session.checkpoint.models(), &u, request, &session.lexicon, EditOptions::default())?;
    let wave = cfg.vocoder.build().vocode(&result.edited_mel)?;
    write_wav(out_wav, &wave)?;
    let mel = out_wav.with_extension("mel");
    write_mel(&mel, &result.edited_mel)?;
    let stem = out_wav.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "edit".into());
    let diagnostics = out_wav.with_file_name(format!("{stem}.report.json"));
    let report = result.report();
    write_json(&diagnostics, &report)?;
    Ok(EditOutcome { report, wav: out_wav.to_path_buf(), mel, diagnostics })
}

/// Files written by [`eval`].
#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub report: EvaluationReport,
    pub json: PathBuf,
    pub table: PathBuf,
}

/// Masked-reconstruction evaluation over the prepared corpus; writes
/// `eval_report.json` and `eval_report.txt` into the output directory.
pub fn eval(session: &Session, cfg: &RunConfig, systems: &[System]) -> Result<EvalOutcome> {
    if session.corpus.utterances.is_empty() {
        return Err(Error::Config("evaluation corpus is empty".into()));
    }
    let mut utterances = Vec::with_capacity(session.corpus.utterances.len());
    for u in &session.corpus.utterances {
        let mut e = u.eval_utterance();
        e.speaker = session.speaker_index(&u.entry.speaker_id)?;
        utterances.push(e);
    }
    let vocoder = cfg.vocoder.build();
    let vocoder: Option<&dyn speechedit_core::dsp::Vocoder> = match cfg.eval_level {
        EvalLevel::Mel => None,
        EvalLevel::Waveform => Some(&vocoder),
    };
    let report = masked_reconstruction(session.checkpoint.models(), &utterances, cfg.mask_fraction, systems, vocoder)?;
    let json = cfg.output.join("eval_report.json");
    let table = cfg.output.join("eval_report.txt");
    write_json(&json, &report)?;
    let mut text = report.table();
    for s in &report.skipped {
        text.push_str(&format!("skipped {s}\n"));
    }
    write_atomic(&table, text.as_bytes())?;
    Ok(EvalOutcome { report, json, table })
}
