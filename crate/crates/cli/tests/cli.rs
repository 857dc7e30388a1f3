use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bee"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("bee runs")
}

fn ok(args: &[&str]) -> String {
    let out = bee(args);
    assert!(
        out.status.success(),
        "bee {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, kind: &str, extra: &str) -> String {
    let d = dir.to_str().unwrap();
    ok(&["synth", "--kind", kind, "--out", d, "--seed", "3"]);
    let cfg = dir.join("config.toml");
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str(extra);
    fs::write(&cfg, text).unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn score_reports_json_and_markdown() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "ablation", "");
    let gold = dir.path().join("test.jsonl");
    let g = gold.to_str().unwrap();
    let json: serde_json::Value = serde_json::from_str(&ok(&["score", "--gold", g, "--pred", g, "--format", "json"])).unwrap();
    assert_eq!(json["total"], 100.0);
    assert_eq!(json["ac"]["f1"], 100.0);
    let md = ok(&["score", "--gold", g, "--pred", g, "--format", "markdown"]);
    assert!(md.contains("| AC |"), "{md}");
    assert!(md.contains("total: 100.00"), "{md}");
}

#[test]
fn train_then_evaluate_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "ablation", "");
    let mut text = fs::read_to_string(&cfg).unwrap().replace("epochs = 60", "epochs = 2");
    text = text.replace("precision = \"f64\"", "precision = \"f32\"");
    fs::write(&cfg, text).unwrap();
    let stdout = ok(&["train", "--config", &cfg]);
    assert!(stdout.contains("best epoch"), "{stdout}");
    let out = dir.path().join("out");
    let history: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(history.len(), 2);
    assert!(out.join("report.md").exists());
    assert!(out.join("a2").read_dir().unwrap().any(|e| e.unwrap().path().extension().unwrap() == "a2"));

    let ckpt = out.join("checkpoint.json");
    let test = dir.path().join("test.jsonl");
    let parse = dir.path().join("test.conllu");
    let eval_dir = dir.path().join("eval");
    let json = ok(&[
        "evaluate",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        test.to_str().unwrap(),
        "--parse",
        parse.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(report["total"].as_f64().unwrap() >= 0.0);
    assert!(eval_dir.join("predictions.jsonl").exists());

    let missing = bee(&["evaluate", "--ckpt", ckpt.to_str().unwrap(), "--data", test.to_str().unwrap()]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("parse"));
}

#[test]
fn ablate_writes_a_two_row_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "ablation", "");
    let text = fs::read_to_string(&cfg).unwrap().replace("epochs = 60", "epochs = 2");
    fs::write(&cfg, text).unwrap();
    let stdout = ok(&["ablate", "--config", &cfg]);
    assert!(stdout.contains("| BioBert-BEE |") && stdout.contains("| BioBert-GNN-BEE |"), "{stdout}");
    let out = dir.path().join("out");
    assert_eq!(fs::read_to_string(out.join("report.md")).unwrap(), stdout);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(report["with_graph"]["total"].is_number());
    for sub in ["biobert_bee", "biobert_gnn_bee"] {
        assert!(out.join(sub).join("checkpoint.json").exists());
    }
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "data.train = \"x.jsonl\"\ntrain.learning_rate = 0.1\n").unwrap();
    let out = bee(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}
