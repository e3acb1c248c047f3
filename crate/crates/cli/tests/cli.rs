use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "d_model = 16\nn_heads = 2\nn_layers = 1\nd_ff = 32\nd_hidden = 16\nvocab_size = 200\nmax_len = 32\n";

fn meder(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meder"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn stats_on_bundled_corpus_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = meder(dir.path(), &["stats"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), include_str!("golden/stats_toy.txt"));
    assert!(listing(dir.path()).is_empty());
}

#[test]
fn predict_without_entity_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = meder(dir.path(), &["predict", "--text", "জ্বর"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn unknown_flags_are_errors_and_help_lists_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(meder(dir.path(), &["stats", "--epoch", "3"]).status.code(), Some(1));
    assert_eq!(meder(dir.path(), &["frobnicate"]).status.code(), Some(1));
    let help = meder(dir.path(), &["train", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = stdout(&help);
    for flag in [
        "--config", "--seed", "--out-dir", "--corpus", "--labels", "--vocab", "--max-len", "--epochs", "--batch-size",
        "--lr", "--order",
    ] {
        assert!(text.contains(flag), "train --help lacks {flag}");
    }
    let help = stdout(&meder(dir.path(), &["predict", "--help"]));
    for flag in ["--checkpoint", "--text", "--entity"] {
        assert!(help.contains(flag));
    }
}

#[test]
fn gradcheck_passes_on_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = meder(dir.path(), &["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "max_rel_err < 1e-3"), "{}", stdout(&o));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = meder(dir.path(), &["stats", "--corpus", "missing.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(dir.path().join("bad.jsonl"), "{\"id\":\"a\",\"text\":\"t\",\"entity\":\"t\",\"label\":\"Diseases\"}\n").unwrap();
    let o = meder(dir.path(), &["stats", "--corpus", "bad.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Diseases"));
    fs::write(dir.path().join("bad.conf"), "epochz = 3\n").unwrap();
    assert_eq!(meder(dir.path(), &["stats", "--config", "bad.conf"]).status.code(), Some(2));
}

#[test]
fn prepare_converts_export_and_reports_rejects() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("export.csv"),
        "Sentence,Entity,Class\n\
         \"রোগীর ইনসুলিন লাগবে, দ্রুত\",ইনসুলিন,Hormone\n\
         ফুসফুসের সংক্রমণ,ফুসফুসের,organ\n\
         কিছু,শব্দ,Unknown Kind\n",
    )
    .unwrap();
    let o = meder(dir.path(), &["prepare", "--corpus", "export.csv", "--out-dir", "prep"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("imported 2 records"), "{out}");
    assert!(out.contains("rejected rows: 1") && out.contains("line 4"), "{out}");
    assert_eq!(listing(dir.path()), ["export.csv", "prep"]);
    assert_eq!(listing(&dir.path().join("prep")), ["corpus.jsonl", "rejected.jsonl"]);

    let o = meder(dir.path(), &["stats", "--corpus", "prep/corpus.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("total                        2"), "{}", stdout(&o));
}

#[test]
fn train_eval_predict_round_trip_stays_in_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.conf"), SMALL).unwrap();
    let args = ["train", "--config", "small.conf", "--out-dir", "run", "--epochs", "3", "--lr", "1e-3", "--batch-size", "16"];
    let o = meder(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        listing(&dir.path().join("run")),
        ["confusion.csv", "history.json", "labels.txt", "metrics.json", "model.ckpt", "run.conf", "vocab.txt"]
    );
    let ckpt = fs::read(dir.path().join("run/model.ckpt")).unwrap();

    // same seed, same bytes
    let args2 = ["train", "--config", "small.conf", "--out-dir", "run2", "--epochs", "3", "--lr", "1e-3", "--batch-size", "16"];
    assert_eq!(meder(dir.path(), &args2).status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("run2/model.ckpt")).unwrap(), ckpt);
    let args3 = ["train", "--config", "small.conf", "--out-dir", "run3", "--epochs", "3", "--seed", "7"];
    assert_eq!(meder(dir.path(), &args3).status.code(), Some(0));
    assert_ne!(fs::read(dir.path().join("run3/model.ckpt")).unwrap(), ckpt);

    let o = meder(dir.path(), &["eval", "--checkpoint", "run/model.ckpt", "--out-dir", "ev"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Overall Accuracy"));
    assert_eq!(
        fs::read_to_string(dir.path().join("ev/eval_test_metrics.json")).unwrap(),
        fs::read_to_string(dir.path().join("run/metrics.json")).unwrap()
    );

    let o = meder(
        dir.path(),
        &["predict", "--checkpoint", "run/model.ckpt", "--text", "রোগীর ইনসুলিন প্রয়োজন।", "--entity", "ইনসুলিন"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let probs = v["probabilities"].as_array().unwrap();
    assert_eq!(probs.len(), 6);
    let total: f64 = probs.iter().map(|p| p["probability"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let o = meder(dir.path(), &["predict", "--checkpoint", "run/model.ckpt", "--text", "x", "--entity", "।।"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(listing(dir.path()), ["ev", "run", "run2", "run3", "small.conf"]);
}

#[test]
fn eval_without_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(meder(dir.path(), &["eval"]).status.code(), Some(1));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("hot.conf"), format!("{SMALL}init_std = 1e30\n")).unwrap();
    let o = meder(dir.path(), &["train", "--config", "hot.conf", "--epochs", "1", "--out-dir", "o"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged at step 1"));
}
