mod common;

use std::path::Path;
use std::process::{Command, Output};

fn speechedit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speechedit")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, iterations: u64) {
    let cfg = serde_json::json!({
        "manifest": "data/toy/manifest.jsonl",
        "lexicon": "data/toy/lexicon.txt",
        "alignments": "data/toy/alignments",
        "model": { "scale_factor": 0.03125 },
        "iterations": iterations,
        "vocoder": { "kind": "griffin_lim", "iterations": 4 }
    });
    std::fs::write(dir.join("run.json"), cfg.to_string()).unwrap();
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&speechedit(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&speechedit(dir.path(), &["train", "--iterations", "many"])), 1);
    assert_eq!(code(&speechedit(dir.path(), &["--help"])), 0);
}

#[test]
fn missing_inputs_are_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = speechedit(dir.path(), &["prep"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("manifest.jsonl"));
    std::fs::write(dir.path().join("bad.json"), "{\"seed\": \"x\"}").unwrap();
    assert_eq!(code(&speechedit(dir.path(), &["--config", "bad.json", "prep"])), 1);
    assert_eq!(code(&speechedit(dir.path(), &["--vocoder", "wavenet", "prep"])), 1);
    assert_eq!(code(&speechedit(dir.path(), &["--systems", "proposed,baseline9", "eval"])), 1);
}

#[test]
fn full_lifecycle_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&speechedit(d, &["make-toy"])), 0);
    write_config(d, 2);
    let o = speechedit(d, &["--config", "run.json", "prep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("prepared 2 utterances"));

    let o = speechedit(d, &["--config", "run.json", "--seed", "7", "train"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("work/checkpoints/latest.ckpt").exists());
    let csv = std::fs::read_to_string(d.join("work/checkpoints/loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let req = r#"{"operation":"replace","first_word":1,"last_word":1,"new_text":"big"}"#;
    let o = speechedit(d, &["--config", "run.json", "edit", "--utterance", "toy-001", "--request", req, "--out", "out/e.wav"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("t_fusion") && stdout.contains("regions A"), "{stdout}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("out/e.report.json")).unwrap()).unwrap();
    assert_eq!(report["utterance_id"], "toy-001");
    assert!(d.join("out/e.wav").exists() && d.join("out/e.mel").exists() && d.join("out/e.json").exists());

    std::fs::write(d.join("req.json"), req).unwrap();
    let o = speechedit(d, &["--config", "run.json", "edit", "--utterance", "nope", "--request", "req.json", "--out", "out/x.wav"]);
    assert_ne!(code(&o), 0);
    let o = speechedit(d, &["--config", "run.json", "edit", "--utterance", "toy-001", "--request", "{\"operation\":\"replace\",\"first_word\":1,\"last_word\":1,\"new_text\":\"zebra\"}", "--out", "out/z.wav"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("zebra"));

    let o = speechedit(d, &["--config", "run.json", "--systems", "proposed,baseline1", "eval"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(d.join("work/output/eval_report.json")).unwrap();
    let table = std::fs::read_to_string(d.join("work/output/eval_report.txt")).unwrap();
    assert!(table.contains("Proposed") && table.contains("Baseline1"), "{table}");
    assert_eq!(code(&speechedit(d, &["--config", "run.json", "--systems", "proposed,baseline1", "eval"])), 0);
    assert_eq!(std::fs::read(d.join("work/output/eval_report.json")).unwrap(), first);
}
