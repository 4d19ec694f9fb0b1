//! Runs the `framesift` binary end to end against mock backends.

use std::path::Path;
use std::process::{Command, Output};

fn framesift(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_framesift"))
        .current_dir(dir)
        .args(args)
        .env_remove("FRAMESIFT_BACKEND")
        .env_remove("FRAMESIFT_SCORER")
        .env_remove("FRAMESIFT_GENERATOR")
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path, frames: usize) {
    let out = framesift(dir, &["synth", "--frames", &frames.to_string(), "--out", "m.jsonl"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const QUESTION: &[&str] = &["-q", "What does the dog catch?", "--option", "a ball", "--option", "a stick"];

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 256);
    let mut args = vec!["run", "-m", "m.jsonl", "--seed", "5", "-o", "r.json"];
    args.extend_from_slice(QUESTION);
    let out = framesift(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let r = json(&dir.path().join("r.json"));
    assert_eq!(r["complete"], true);
    assert!(r["generated_at"].is_string());
    assert_eq!(r["prefilter"]["survivors"].as_array().unwrap().len(), 128);
    assert_eq!(r["retrieved"].as_array().unwrap().len(), 64);
    assert!(r["qa"]["k"].as_u64().unwrap() <= 2);
    assert_eq!(r["config"]["backends"]["scorer"], "mock://5");

    let out = framesift(dir.path(), &["report", "--run", "r.json", "--out-dir", "plots"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let frames = std::fs::read_to_string(dir.path().join("plots/frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 1 + 128);
    let retrieved = frames.lines().skip(1).filter(|l| l.split(',').nth(5) == Some("1")).count();
    assert_eq!(retrieved, 64);
    let cost = std::fs::read_to_string(dir.path().join("plots/cost.csv")).unwrap();
    assert!(cost.starts_with("stage,tflops\n"));
}

#[test]
fn seeded_runs_match_without_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 256);
    for out in ["a.json", "b.json"] {
        let mut args = vec!["run", "-m", "m.jsonl", "--seed", "9", "--no-timestamp", "-o", out];
        args.extend_from_slice(QUESTION);
        assert!(framesift(dir.path(), &args).status.success());
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 32);

    // budget order violated
    let out = framesift(dir.path(), &["run", "-m", "m.jsonl", "-q", "x?", "--m-retrieve", "500"]);
    assert_eq!(out.status.code(), Some(2));

    // unknown key in the config file
    std::fs::write(dir.path().join("bad.json"), r#"{"m_retreive": 3}"#).unwrap();
    let out = framesift(dir.path(), &["estimate-cost", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));

    // missing manifest
    let out = framesift(dir.path(), &["run", "-m", "nope.jsonl", "-q", "x?"]);
    assert_eq!(out.status.code(), Some(4));

    // unreachable backend: incomplete report still written
    let out = Command::new(env!("CARGO_BIN_EXE_framesift"))
        .current_dir(dir.path())
        .args(["run", "-m", "m.jsonl", "-q", "x?", "-o", "partial.json"])
        .env("FRAMESIFT_BACKEND", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let r = json(&dir.path().join("partial.json"));
    assert_eq!(r["complete"], false);
    assert_eq!(r["error"]["kind"], "BackendUnavailable");
    assert_eq!(r["error"]["stage"], "decompose");

    // exporting an incomplete report is a data error
    let out = framesift(dir.path(), &["report", "--run", "partial.json", "--out-dir", "x"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("IncompleteReport"));
}

#[test]
fn estimate_cost_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = framesift(dir.path(), &["estimate-cost", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["answer"].as_f64().unwrap() - 354.0).abs() < 1e-9);
    assert!((v["baseline_total"].as_f64().unwrap() - 885.0).abs() < 1e-9);

    let out = framesift(dir.path(), &["estimate-cost", "--views", "1"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("68.2%"), "{table}");
}

#[test]
fn eval_summary() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 64);
    std::fs::write(
        dir.path().join("data.jsonl"),
        concat!(
            r#"{"id":"a","manifest":"m.jsonl","question":"Is there a dog?","answer":"yes"}"#,
            "\n",
            r#"{"id":"b","manifest":"gone.jsonl","question":"Is there a car?","answer":"yes"}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = framesift(dir.path(), &["eval", "-d", "data.jsonl", "-o", "s.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.path().join("s.json"));
    assert_eq!(s["n_items"], 2);
    assert_eq!(s["n_failed"], 1);
    assert!(s["cost_totals"]["total"].as_f64().unwrap() > 0.0);

    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = framesift(dir.path(), &["eval", "-d", "empty.jsonl"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn debug_stages() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 40);
    let out = framesift(dir.path(), &["decompose", "-q", "Why did the dog run?"]);
    assert!(out.status.success());
    let d: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!d["captions"]["entity"].as_array().unwrap().is_empty());

    let out = framesift(dir.path(), &["score", "-m", "m.jsonl", "-q", "dog?", "--limit", "10"]);
    assert!(out.status.success());
    let t: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(t["frames"].as_array().unwrap().len(), 10);
}
