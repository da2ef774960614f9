//! End-to-end pipeline runs against the shipped fixture corpus, executed
//! through the real binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use converank_core::fixtures;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_converank"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .arg("--data-dir")
        .arg(dir.join("data"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Desk-scale settings so training completes in seconds.
fn write_desk_config(dir: &Path) -> String {
    let path = dir.join("desk.cfg");
    fs::write(
        &path,
        "encoder.depth=1\nencoder.dim=16\nencoder.heads=2\nencoder.k_layers=1\n\
         encoder.max_len=64\nconcept.dim=4\ntrain.epochs=2\ntrain.batch_size=4\n\
         train.lr=1e-3\nconcepts.num_turns=3\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in ["ingest", "annotate", "mine", "train", "eval", "sweep", "report"] {
        let out = bin().args([sub, "--help"]).output().unwrap();
        assert!(out.status.success(), "{sub} --help failed");
    }
    assert!(bin().arg("--help").output().unwrap().status.success());
}

#[test]
fn bad_raw_path_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["ingest", "--raw", "/no/such/file.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, fixtures::RAW_FIXTURE).unwrap();
    let out = run(
        &["--set", "encoder.depht=2", "ingest", "--raw", raw.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, fixtures::RAW_FIXTURE).unwrap();
    let raw = raw.to_str().unwrap().to_string();

    assert_ok(&run(&["ingest", "--raw", &raw], dir.path()));
    let jsonl = dir.path().join("data/dialogues_train.jsonl");
    let first = fs::read(&jsonl).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 2);
    let manifest = dir.path().join("data/manifest-ingest-train.json");
    let first_manifest = fs::read(&manifest).unwrap();

    // Reruns with unchanged inputs reproduce identical bytes and manifests.
    assert_ok(&run(&["ingest", "--raw", &raw], dir.path()));
    assert_eq!(fs::read(&jsonl).unwrap(), first);
    assert_eq!(fs::read(&manifest).unwrap(), first_manifest);
}

#[test]
fn concept_flow_cannot_be_disabled_for_the_all_variant() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, fixtures::RAW_FIXTURE).unwrap();
    let cfg = write_desk_config(dir.path());
    assert_ok(&run(
        &["--config", &cfg, "ingest", "--raw", raw.to_str().unwrap()],
        dir.path(),
    ));
    assert_ok(&run(&["--config", &cfg, "annotate"], dir.path()));
    assert_ok(&run(&["--config", &cfg, "mine"], dir.path()));
    let out = run(
        &["--config", &cfg, "--set", "concept.enabled=false", "train", "--variant", "all"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("concept.enabled"), "stderr: {stderr}");
}

#[test]
fn missing_upstream_artifact_names_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["annotate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ingest"), "stderr: {stderr}");
}

#[test]
fn tampered_artifact_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, fixtures::RAW_FIXTURE).unwrap();
    assert_ok(&run(&["ingest", "--raw", raw.to_str().unwrap()], dir.path()));

    // Edit the dialogues file behind the manifest's back.
    let jsonl = dir.path().join("data/dialogues_train.jsonl");
    let mut text = fs::read_to_string(&jsonl).unwrap();
    text = text.replacen("painting", "sculpting", 1);
    fs::write(&jsonl, text).unwrap();

    let out = run(&["annotate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("modified"), "stderr: {stderr}");
}

#[test]
fn full_pipeline_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, fixtures::RAW_FIXTURE).unwrap();
    let raw = raw.to_str().unwrap().to_string();
    let cfg = write_desk_config(dir.path());

    assert_ok(&run(&["--config", &cfg, "ingest", "--raw", &raw], dir.path()));
    assert_ok(&run(&["--config", &cfg, "annotate"], dir.path()));
    assert_ok(&run(&["--config", &cfg, "mine", "--lambda", "0.4"], dir.path()));
    assert_ok(&run(
        &["--config", &cfg, "train", "--variant", "all"],
        dir.path(),
    ));

    let data = dir.path().join("data");
    let out = dir.path().join("out");
    for artifact in [
        data.join("dialogues_train.jsonl"),
        data.join("annotations_train.jsonl"),
        data.join("concepts_train.jsonl"),
        data.join("stats_train.bin"),
        out.join("vocab.json"),
        out.join("latest.ckpt"),
        out.join("best.ckpt"),
        out.join("metrics.csv"),
        out.join("config.txt"),
        out.join("manifest-train-all.json"),
    ] {
        assert!(artifact.exists(), "missing {}", artifact.display());
    }

    // Evaluate on the training split (the fixture has no second split).
    let ckpt = out.join("best.ckpt");
    assert_ok(&run(
        &["--config", &cfg, "eval", "--checkpoint", ckpt.to_str().unwrap(), "--split", "train"],
        dir.path(),
    ));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("report_train_all.json")).unwrap(),
    )
    .unwrap();
    let hits1 = report["hits1"].as_f64().unwrap();
    let mrr = report["mrr"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&hits1));
    assert!(mrr >= hits1);
    assert_eq!(report["per_turn_ranks"].as_array().unwrap().len(), 7);

    // Context-window sweep over a small range.
    assert_ok(&run(
        &[
            "--config", &cfg, "sweep", "--checkpoint", ckpt.to_str().unwrap(),
            "--split", "train", "--min-turns", "2", "--max-turns", "3",
        ],
        dir.path(),
    ));
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "num_turns,hits1,mrr");
    assert_eq!(lines.len(), 3);
}

#[test]
fn eval_rerun_reproduces_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, fixtures::RAW_FIXTURE).unwrap();
    let raw = raw.to_str().unwrap().to_string();
    let cfg = write_desk_config(dir.path());

    assert_ok(&run(&["--config", &cfg, "ingest", "--raw", &raw], dir.path()));
    assert_ok(&run(&["--config", &cfg, "annotate"], dir.path()));
    assert_ok(&run(&["--config", &cfg, "mine"], dir.path()));
    assert_ok(&run(&["--config", &cfg, "train", "--variant", "baseline"], dir.path()));

    let ckpt = dir.path().join("out/best.ckpt");
    let eval_args = [
        "--config",
        cfg.as_str(),
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--split",
        "train",
    ];
    assert_ok(&run(&eval_args, dir.path()));
    let report_path = dir.path().join("out/report_train_baseline.json");
    let first = fs::read(&report_path).unwrap();
    assert_ok(&run(&eval_args, dir.path()));
    assert_eq!(fs::read(&report_path).unwrap(), first);
}
