//! `RunConfig`: the JSON file driving every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speechedit_core::acoustic::ModelConfig;
use speechedit_core::evaluation::{EvalLevel, System};
use speechedit_core::nn::AdamConfig;

use crate::fsutil::read_json;
use crate::vocoder::VocoderChoice;
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 1234;
pub const DESK_ITERATIONS: u64 = 500;
/// Iterations used for the full-size English system.
pub const FULL_SCALE_ITERATIONS: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub lexicon: PathBuf,
    pub alignments: PathBuf,
    /// Feature cache written by `prep`.
    pub cache: PathBuf,
    pub checkpoints: PathBuf,
    pub output: PathBuf,
    pub model: ModelConfig,
    pub optimizer: AdamConfig,
    pub seed: u64,
    pub iterations: u64,
    pub batch_size: usize,
    /// Save a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    /// Start the output projection bias at the corpus mean frame.
    pub init_output_bias: bool,
    pub vocoder: VocoderChoice,
    pub mask_fraction: f64,
    pub systems: Vec<System>,
    pub eval_level: EvalLevel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: "data/toy/manifest.jsonl".into(),
            lexicon: "data/toy/lexicon.txt".into(),
            alignments: "data/toy/alignments".into(),
            cache: "work/cache".into(),
            checkpoints: "work/checkpoints".into(),
            output: "work/output".into(),
            model: ModelConfig::scaled(0.125),
            optimizer: AdamConfig::default(),
            seed: DEFAULT_SEED,
            iterations: DESK_ITERATIONS,
            batch_size: 32,
            checkpoint_every: 100,
            init_output_bias: true,
            vocoder: VocoderChoice::default(),
            mask_fraction: 1.0 / 3.0,
            systems: System::ALL.to_vec(),
            eval_level: EvalLevel::Mel,
        }
    }
}

impl RunConfig {
    /// Loads a config; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        for p in [&mut self.manifest, &mut self.lexicon, &mut self.alignments, &mut self.cache, &mut self.checkpoints, &mut self.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let VocoderChoice::External { command } = &mut self.vocoder {
            if let Some(program) = command.first_mut() {
                let candidate = base.join(&*program);
                if program.contains('/') && Path::new(program.as_str()).is_relative() {
                    *program = candidate.to_string_lossy().into_owned();
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return Err(Error::Config("mask_fraction must lie in (0, 1)".into()));
        }
        if let VocoderChoice::GriffinLim { iterations: 0 } = self.vocoder {
            return Err(Error::Config("griffin_lim iterations must be at least 1".into()));
        }
        if let VocoderChoice::External { command } = &self.vocoder {
            if command.is_empty() {
                return Err(Error::Config("external vocoder needs a command".into()));
            }
        }
        Ok(())
    }

    /// Full-size model and iteration count. Provided for completeness;
    /// this is days of CPU time.
    pub fn full_scale(&mut self) {
        self.model.scale_factor = 1.0;
        self.iterations = FULL_SCALE_ITERATIONS;
        self.batch_size = 32;
    }

    pub fn latest_checkpoint(&self) -> PathBuf {
        self.checkpoints.join("latest.ckpt")
    }
}
