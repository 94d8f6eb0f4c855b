#![allow(dead_code)]

use std::path::Path;

use speechedit::commands;
use speechedit::config::RunConfig;
use speechedit::toy;
use speechedit_core::acoustic::ModelConfig;

/// Config rooted at `root` with the toy corpus under `root/data`.
pub fn toy_config(root: &Path, scale: f64, iterations: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.rebase(root);
    cfg.manifest = root.join("data/manifest.jsonl");
    cfg.lexicon = root.join("data/lexicon.txt");
    cfg.alignments = root.join("data/alignments");
    cfg.model = ModelConfig::scaled(scale);
    cfg.iterations = iterations;
    cfg.vocoder = speechedit::vocoder::VocoderChoice::GriffinLim { iterations: 4 };
    cfg
}

/// Writes and prepares the toy corpus.
pub fn prepared(root: &Path, scale: f64, iterations: u64) -> RunConfig {
    let cfg = toy_config(root, scale, iterations);
    toy::write_corpus(&root.join("data")).unwrap();
    commands::prep(&cfg).unwrap();
    cfg
}

/// Prepared toy corpus plus a checkpoint after `iterations` steps.
pub fn trained(root: &Path, scale: f64, iterations: u64) -> RunConfig {
    let cfg = prepared(root, scale, iterations);
    commands::train(&cfg, false, |_| {}).unwrap();
    cfg
}
