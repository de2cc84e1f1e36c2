use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn asa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asa")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = asa(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small world, data, a trained bundle and a tuned one.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("w.json"), r#"{"dim": 32}"#).unwrap();
    ok(d, &["simulate", "--world", "w.json", "--n-per-cell", "60", "--out", "d.jsonl", "--generations", "g.jsonl"]);
    ok(d, &["build-vectors", "--data", "d.jsonl", "--out", "v.json"]);
    ok(d, &["--bundle", "b.json", "train", "--data", "d.jsonl", "--vectors", "v.json"]);
    ok(d, &["--bundle", "b.json", "--report-out", "tune", "tune", "--world", "w.json", "--data", "d.jsonl", "--out", "t.json"]);
    dir
}

#[test]
fn train_tune_eval_round() {
    let dir = workspace();
    let d = dir.path();
    let tune = json(d.join("tune.json"));
    let tuned = json(d.join("t.json"));
    assert_eq!(tuned["tau"].as_f64().unwrap() as f32, tune["selected"]["tau"].as_f64().unwrap() as f32);
    assert!(d.join("tune.csv").exists());

    ok(d, &["--bundle", "t.json", "--report-out", "eval.json", "eval", "--world", "w.json", "--data", "d.jsonl"]);
    let eval = json(d.join("eval.json"));
    let f1 = |k: &str| eval[k]["f1"].as_f64().unwrap();
    assert!(f1("steered") > f1("baseline"), "{} vs {}", f1("steered"), f1("baseline"));
    let csv = std::fs::read_to_string(d.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("mode,alpha,tau"));
}

#[test]
fn same_seed_same_report() {
    let dir = workspace();
    let d = dir.path();
    let args = ["--bundle", "t.json", "ablate", "--world", "w.json", "--data", "d.jsonl"];
    let a = ok(d, &args).stdout;
    let b = ok(d, &args).stdout;
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["modes"].as_array().unwrap().len(), 7);
}

#[test]
fn generation_log_is_scored_without_a_bundle() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["--report-out", "gen", "eval", "--generations", "g.jsonl"]);
    let report = json(d.join("gen.json"));
    assert_eq!(report["n"], 480);
    assert!(d.join("gen.samples.csv").exists());
}

#[test]
fn export_then_import_restores_working_precision() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["--bundle", "t.json", "export", "--out", "small.json"]);
    ok(d, &["--bundle", "back.json", "import", "--in", "small.json"]);
    assert!(std::fs::metadata(d.join("small.json")).unwrap().len() < std::fs::metadata(d.join("t.json")).unwrap().len());
    let (tuned, back) = (json(d.join("t.json")), json(d.join("back.json")));
    assert_eq!(back["precision"], "f32");
    assert_eq!(back["tau"], tuned["tau"]);
    assert_eq!(back["domain_order"], tuned["domain_order"]);
}

#[test]
fn serve_over_stdio() {
    let dir = workspace();
    let d = dir.path();
    let bundle = json(d.join("t.json"));
    let layer = bundle["layer"].as_u64().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_asa"))
        .current_dir(d)
        .args(["--bundle", "t.json", "serve", "--stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let state: Vec<f32> = vec![0.0; 32];
    let input = format!(
        "{}\n{}\n{}\n",
        serde_json::json!({"type": "hello", "dim": 32, "layer": layer, "model_id": "t"}),
        serde_json::json!({"type": "state", "session": "a", "vector": state}),
        serde_json::json!({"type": "bye"}),
    );
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let replies: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kinds: Vec<&str> = replies.iter().map(|r| r["type"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["hello", "steer", "bye"]);
    assert_eq!(replies[0]["protocol"], "asa-wire/1");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(asa(d, &["--bundle", "missing.json", "export", "--out", "x.json"]).status.code(), Some(3));
    assert_eq!(asa(d, &["eval", "--data", "a", "--generations", "b"]).status.code(), Some(2));
    assert_eq!(asa(d, &["serve", "--alpha", "2"]).status.code(), Some(2));
    std::fs::write(d.join("w.json"), r#"{"dim": 32, "tau_bogus": 1}"#).unwrap();
    assert_ne!(asa(d, &["simulate", "--world", "w.json", "--out", "x"]).status.code(), Some(0));
    std::fs::write(d.join("bad.json"), "{\"bundle\": ").unwrap();
    assert_eq!(asa(d, &["--bundle", "bad.json", "export", "--out", "x.json"]).status.code(), Some(3));
}
