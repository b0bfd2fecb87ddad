use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use triage_core::model::load_checkpoint;
use triage_core::pipeline::ExperimentConfig;

fn triage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triage")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = triage(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small config so the end-to-end test finishes in seconds.
fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::desk_scale(5);
    cfg.corpus.n_patients = 80;
    cfg.vocab_size = 600;
    cfg.documents_per_class = Some(40);
    cfg.eval_documents_per_class = Some(10);
    cfg.document_training.max_epochs = 1;
    cfg.instance_training.max_epochs = 1;
    cfg.strategy.max_total_tokens = 4000;
    let path = dir.join("experiment.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn gen_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    ok(&["gen", "--patients", "40", "--seed", "7", "--out", s(&a)]);
    ok(&["gen", "--patients", "40", "--seed", "7", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.jsonl");
    ok(&["gen", "--patients", "40", "--seed", "8", "--out", s(&c)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(triage(&["gen"]).status.code(), Some(2));
    assert_eq!(triage(&["gen", "--out", "x", "--bogus"]).status.code(), Some(2));
    assert_eq!(triage(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        triage(&["train", "--corpus", "c", "--tokenizer", "t", "--strategy", "segment_batch", "--chunk-size", "100", "--out", "o"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(triage(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = triage(&["tokenizer", "--corpus", s(&missing), "--out", s(&dir.path().join("t.txt"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "vocab_size = \"many\"").unwrap();
    let out = triage(&["--config", s(&bad), "gen", "--out", s(&dir.path().join("g.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = small_config(d);
    let cfg = ["--config", s(&config), "--seed", "5"];
    let with = |rest: &[&str]| -> Vec<String> { cfg.iter().chain(rest).map(|x| x.to_string()).collect() };
    let run = |rest: &[&str]| {
        let args = with(rest);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    let corpus = d.join("corpus.jsonl");
    let stats = d.join("stats.json");
    run(&["gen", "--out", s(&corpus), "--stats", s(&stats)]);
    let st: Value = serde_json::from_slice(&std::fs::read(&stats).unwrap()).unwrap();
    assert!(st["per_instance"]["p50"].as_f64().unwrap() > 0.0);

    let tok = d.join("tokenizer.txt");
    run(&["tokenizer", "--corpus", s(&corpus), "--out", s(&tok)]);

    let brute = d.join("brute.ckpt");
    run(&["train", "--corpus", s(&corpus), "--tokenizer", s(&tok), "--strategy", "brute_force", "--out", s(&brute)]);
    assert!(std::fs::read_to_string(d.join("brute.ckpt.log")).unwrap().contains("epoch=1"));
    let concat = d.join("concat.ckpt");
    run(&[
        "train", "--corpus", s(&corpus), "--tokenizer", s(&tok), "--strategy", "concat_512", "--init", s(&brute),
        "--out", s(&concat),
    ]);
    let seg = d.join("seg.ckpt");
    run(&[
        "train", "--corpus", s(&corpus), "--tokenizer", s(&tok), "--strategy", "segment_batch", "--chunk-size",
        "256", "--init", s(&brute), "--out", s(&seg),
    ]);
    let lora = d.join("lora.ckpt");
    run(&[
        "train", "--corpus", s(&corpus), "--tokenizer", s(&tok), "--strategy", "segment_batch", "--chunk-size",
        "512", "--lora-rank", "8", "--out", s(&lora),
    ]);
    let ck = load_checkpoint(&lora).unwrap();
    assert_eq!(ck.header.lora.as_ref().map(|l| l.rank), Some(8));
    assert!(ck.header.tensors.iter().any(|t| t.name.ends_with("lora_a")));
    assert_eq!(ck.model.config.max_positions, 512);
    assert_eq!(load_checkpoint(&seg).unwrap().model.config.max_positions, 256);

    let metrics = d.join("metrics.json");
    let out = run(&[
        "eval", "--corpus", s(&corpus), "--tokenizer", s(&tok), "--checkpoint", s(&brute), "--checkpoint",
        s(&concat), "--checkpoint", s(&seg), "--strategy", "all", "--out", s(&metrics),
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    for name in ["brute_force", "concat_512", "segment_batch", "Accuracy", "Precision", "Recall"] {
        assert!(table.contains(name), "{table}");
    }
    let reports: Value = serde_json::from_slice(&std::fs::read(&metrics).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);

    let out = run(&[
        "bench", "--corpus", s(&corpus), "--tokenizer", s(&tok), "--checkpoint", s(&concat), "--checkpoint",
        s(&seg), "--instances", "5", "--repetitions", "2",
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("Mean s/inst") && table.contains("segment_batch"), "{table}");

    let corpus_text = std::fs::read_to_string(&corpus).unwrap();
    let id = corpus_text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .find(|v| v["documents"].as_array().is_some_and(|d| !d.is_empty()))
        .unwrap()["instance_id"]
        .as_str()
        .unwrap()
        .to_string();
    let bundle = d.join("explain.json");
    run(&["explain", "--corpus", s(&corpus), "--tokenizer", s(&tok), "--checkpoint", s(&seg), "--instance-id", &id, "--out", s(&bundle)]);
    let b: Value = serde_json::from_slice(&std::fs::read(&bundle).unwrap()).unwrap();
    let total: f64 = b["attention"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-6);

    let map = d.join("map.json");
    run(&["map", "--corpus", s(&corpus), "--tokenizer", s(&tok), "--checkpoint", s(&seg), "--out", s(&map)]);
    let m: Value = serde_json::from_slice(&std::fs::read(&map).unwrap()).unwrap();
    assert!(!m["points"].as_array().unwrap().is_empty());

    let manifest: Value = serde_json::from_slice(&std::fs::read(d.join("MANIFEST.json")).unwrap()).unwrap();
    for name in ["corpus.jsonl", "tokenizer.txt", "seg.ckpt", "metrics.json", "map.json"] {
        let entry = &manifest["outputs"][name];
        assert_eq!(entry["seed"], 5, "{name}");
        assert_eq!(entry["sha256"].as_str().unwrap().len(), 64, "{name}");
    }
    let seg_inputs = manifest["outputs"]["seg.ckpt"]["inputs"].as_object().unwrap();
    assert!(seg_inputs.contains_key(s(&corpus)) && seg_inputs.contains_key(s(&brute)));

    // Brute force with adapters is rejected at runtime.
    let out = triage(&with(&[
        "train", "--corpus", s(&corpus), "--tokenizer", s(&tok), "--strategy", "brute_force", "--lora-rank", "4",
        "--out", s(&d.join("x.ckpt")),
    ]).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
}
