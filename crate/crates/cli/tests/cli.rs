use std::path::{Path, PathBuf};

use tagbench_cli::run;
use tagbench_core::audio::{load_wav, write_wav};
use tagbench_core::datasets::{load_manifest, Split};
use tagbench_core::models::{Arch, ModelConfig};
use tagbench_core::report::EvalReport;
use tagbench_core::AudioClip;

fn tb(args: &[&str]) -> i32 {
    run(std::iter::once("tagbench").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 20 short synthetic clips written through the CLI itself.
fn synth(dir: &Path) -> PathBuf {
    let out = dir.join("data");
    assert_eq!(tb(&["synth", "--out", p(&out), "--n-clips", "20", "--seconds", "0.5", "--seed", "2"]), 0);
    out.join("manifest.tsv")
}

fn small_model_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.json");
    let model = ModelConfig { input_length: 8000, dropout: 0.0, ..ModelConfig::reduced(Arch::ShortChunk) };
    let json = serde_json::json!({ "model": model, "train": { "batch_size": 8 } });
    std::fs::write(&path, json.to_string()).unwrap();
    path
}

#[test]
fn train_for_five_epochs_writes_five_history_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let cfg = small_model_config(dir.path());
    let out = dir.path().join("train");
    let code = tb(&["train", "--config", p(&cfg), "--manifest", p(&manifest), "--out", p(&out), "--epochs", "5"]);
    assert_eq!(code, 0);
    let history = std::fs::read_to_string(out.join("history.tsv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch\ttrain_loss\tval_loss\tphase\tlr");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("5\t"));
    assert!(out.join("best.ckpt").exists());
    assert!(out.join("best.json").exists());
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["train"]["max_epochs"], 5);
    assert_eq!(written["train"]["batch_size"], 8);
    assert!(!out.join(".tagbench.lock").exists());

    let eval = dir.path().join("eval");
    let code = tb(&[
        "eval", "--checkpoint", p(&out.join("best.ckpt")), "--manifest", p(&manifest), "--out", p(&eval),
        "--deform", "noise:0.1",
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(eval.join("report_short_chunk_noise_0.1.json")).unwrap();
    let r = EvalReport::from_json(&text).unwrap();
    assert_eq!(r.split, "test");
    assert_eq!(r.deformation, "noise:0.1");
    r.validate().unwrap();
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let out = dir.path().join("o");
    assert_eq!(tb(&["train", "--arch", "short_chunk", "--manifest", p(&missing), "--out", p(&out)]), 3);
    assert_eq!(tb(&["eval", "--oracle", "--manifest", p(&missing), "--out", p(&out)]), 3);
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let out = dir.path().join("o");
    assert_eq!(tb(&["eval", "--oracle", "--manifest", p(&manifest), "--out", p(&out), "--deform", "reverb:3"]), 2);
    assert_eq!(tb(&["perturb", "--deform", "pitch:x", "--out", p(&out), "a.wav"]), 2);
    assert_eq!(tb(&["train", "--arch", "not_a_net"]), 2);
    assert_eq!(tb(&["frobnicate"]), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"epochs": 3}"#).unwrap();
    assert_eq!(tb(&["train", "--config", p(&bad), "--manifest", p(&manifest), "--out", p(&out)]), 2);
    for mels in ["0", "2000"] {
        let code = tb(&["train", "--arch", "fcn", "--reduced", "--mels", mels, "--manifest", p(&manifest), "--out", p(&out)]);
        assert_eq!(code, 2, "{mels} bands");
    }
    assert_eq!(tb(&["--help"]), 0);
}

#[test]
fn stretch_changes_length_by_the_inverse_rate() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tone.wav");
    let x: Vec<f32> = (0..16000).map(|i| (i as f32 * 0.1).sin() * 0.5).collect();
    write_wav(&AudioClip::new(x, 16000, "tone").unwrap(), &input).unwrap();
    // 16000 / 0.7071 = 22627.6
    for (spec, expect) in [("stretch:0.7071", 22628), ("stretch:2", 8000)] {
        let out = dir.path().join(spec.replace(':', "_"));
        assert_eq!(tb(&["perturb", "--deform", spec, "--out", p(&out), p(&input)]), 0);
        assert_eq!(load_wav(&out.join("tone.wav")).unwrap().len(), expect, "{spec}");
    }
    assert_eq!(tb(&["perturb", "--deform", "pitch:1", "--out", p(dir.path()), p(&input)]), 2);
}

#[test]
fn manifest_perturbation_touches_only_test_clips() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let m = load_manifest(&manifest).unwrap();
    let train_id = m.split(Split::Train)[0].clip_id.clone();
    let test_id = m.split(Split::Test)[0].clip_id.clone();
    let out = dir.path().join("p");
    assert_eq!(tb(&["perturb", "--deform", "noise:0.1", "--manifest", p(&manifest), "--out", p(&out), "--clip", &train_id]), 2);
    assert_eq!(tb(&["perturb", "--deform", "noise:0.1", "--manifest", p(&manifest), "--out", p(&out), "--split", "train"]), 2);
    let out = dir.path().join("q");
    assert_eq!(tb(&["perturb", "--deform", "noise:0.1", "--manifest", p(&manifest), "--out", p(&out), "--clip", &test_id]), 0);
    let deformed = load_manifest(&out.join("manifest.tsv")).unwrap();
    assert_eq!(deformed.entries.len(), 1);
    assert_eq!(deformed.entries[0].clip_id, test_id);
    assert_eq!(deformed.entries[0].tags, m.get(&test_id).unwrap().tags);
    let before = m.load_audio(m.get(&test_id).unwrap()).unwrap();
    let after = deformed.load_audio(&deformed.entries[0]).unwrap();
    assert_eq!(before.len(), after.len());
    assert_ne!(before.samples(), after.samples());
}

#[test]
fn oracle_robustness_grid_and_report_merge() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let eval = dir.path().join("eval");
    assert_eq!(tb(&["eval", "--oracle", "--robustness", "--manifest", p(&manifest), "--out", p(&eval)]), 0);
    let table = std::fs::read_to_string(eval.join("robustness.tsv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 9);
    let mut reports: Vec<PathBuf> = std::fs::read_dir(&eval)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json") && p.file_name().unwrap() != "config.json")
        .collect();
    reports.sort();
    assert_eq!(reports.len(), 9);
    for path in &reports {
        let r = EvalReport::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(r.macro_roc_auc, Some(1.0));
        assert_eq!(r.macro_pr_auc, Some(1.0));
    }

    let merged = dir.path().join("merged");
    let mut args = vec!["report", "--out", p(&merged)];
    args.extend(reports.iter().map(|r| p(r)));
    assert_eq!(tb(&args), 0);
    let long = std::fs::read_to_string(merged.join("long.csv")).unwrap();
    assert_eq!(long.lines().next(), Some("model,deformation,metric,value"));
    assert_eq!(long.lines().count(), 1 + 9 * 2);
    let wide = std::fs::read_to_string(merged.join("comparison.tsv")).unwrap();
    assert_eq!(wide.lines().count(), 1 + 2);
    assert_eq!(wide.lines().next().unwrap().split('\t').count(), 4 + 9);

    assert_eq!(tb(&["report", "--out", p(&dir.path().join("empty"))]), 2);
    let dup = dir.path().join("dup");
    assert_eq!(tb(&["report", "--out", p(&dup), p(&reports[0]), p(&reports[0])]), 2);
}

#[test]
fn a_held_output_lock_refuses_a_second_writer() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let out = dir.path().join("busy");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".tagbench.lock"), "1\n").unwrap();
    assert_eq!(tb(&["eval", "--oracle", "--manifest", p(&manifest), "--out", p(&out)]), 2);
    std::fs::remove_file(out.join(".tagbench.lock")).unwrap();
    assert_eq!(tb(&["eval", "--oracle", "--manifest", p(&manifest), "--out", p(&out)]), 0);
}

#[test]
fn models_listing_covers_every_architecture() {
    assert_eq!(tb(&["models"]), 0);
    assert_eq!(tb(&["models", "--json"]), 0);
}
