//! Command contracts: exit codes, one JSON line on stdout, artifacts on disk.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_alpha-digger"));
    c.env_remove("ALPHA_DIGGER_THREADS").env("RUST_LOG", "warn");
    c
}

fn tiny_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny.toml")
}

fn run(args: &[&str]) -> (i32, Value, String) {
    let out: Output = bin().args(args).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1, "stdout must hold exactly one line: {stdout:?}");
    let v: Value = serde_json::from_str(lines[0]).unwrap();
    (out.status.code().unwrap(), v, String::from_utf8(out.stderr).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_is_deterministic_and_counts_match() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = tiny_config();
    for d in [&a, &b] {
        let (code, v, _) =
            run(&["gen-data", "--config", s(&cfg), "--seed", "7", "--out", s(d.path()), "data.phase1.n_posts=100"]);
        assert_eq!(code, 0);
        assert_eq!(v["ok"], true);
        assert_eq!(v["counts"]["phase1_posts"], 100);
    }
    for f in ["phase1/posts.csv", "phase1/prices.csv", "before/posts.csv", "during/prices.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let posts = std::fs::read_to_string(a.path().join("phase1/posts.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(posts.as_bytes());
    assert_eq!(rdr.records().count(), 100);
}

#[test]
fn missing_config_exits_2_naming_the_path() {
    let (code, v, stderr) = run(&["gen-data", "--config", "/no/such/experiment.toml"]);
    assert_eq!(code, 2);
    assert_eq!(v["ok"], false);
    assert!(v["error"].as_str().unwrap().contains("/no/such/experiment.toml"));
    assert!(stderr.contains("/no/such/experiment.toml"));
}

#[test]
fn unknown_keys_and_bad_usage_exit_2() {
    let cfg = tiny_config();
    let (code, v, _) = run(&["gen-data", "--config", s(&cfg), "phase2.not_a_key=3"]);
    assert_eq!(code, 2);
    assert!(v["error"].as_str().unwrap().contains("not_a_key"), "{v}");
    let (code, _, _) = run(&["gen-data", "malformed"]);
    assert_eq!(code, 2);
    let (code, v, _) = run(&["no-such-command"]);
    assert_eq!(code, 2);
    assert_eq!(v["stage"], "usage");
    let (code, _, _) = run(&["train-predict", "--kind", "knn"]);
    assert_eq!(code, 2);
}

#[test]
fn train_then_score_preserves_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let (code, v, _) = run(&["train-sentiment", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code, 0, "{v}");
    assert!(v["phase1"]["test_accuracy"].as_f64().unwrap() > 0.5);
    let model = dir.path().join("models/sentiment.json");

    let posts = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/cjk_posts.csv");
    let out = dir.path().join("scores.csv");
    let (code, v, _) = run(&["score", "--model", s(&model), "--in", s(&posts), "--out", s(&out)]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["n_scored"], 4);

    let predictor = alpha_digger::seqnn::load_sentiment_file(&model).unwrap();
    let input = alpha_digger::dataset::read_posts(&posts).unwrap();
    let want = predictor.score(&input.iter().map(|p| p.text.clone()).collect::<Vec<_>>()).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let got: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(got, want);
    assert!(text.lines().nth(2).unwrap().starts_with("1,2020-01-02,"));
}

#[test]
fn score_with_missing_model_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v, _) =
        run(&["score", "--model", "/no/model.json", "--in", "x.csv", "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(code, 1);
    assert_eq!(v["stage"], "load-sentiment");
}

#[test]
fn run_produces_configured_grid_and_complete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let (code, v, _) = run(&["run", "--config", s(&cfg), "--out", s(dir.path()), "--threads", "2"]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["command"], "run");
    assert_eq!(v["cells"].as_array().unwrap().len(), 6);
    let grid = std::fs::read_to_string(dir.path().join("results_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 7);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], true);

    let model = dir.path().join("models/rf_grid.json");
    let sentiment = dir.path().join("models/sentiment.json");
    let (code, ev, _) = run(&["evaluate", "--config", s(&cfg), "--model", s(&model), "--sentiment", s(&sentiment)]);
    assert_eq!(code, 0, "{ev}");
    let rf_grid =
        v["cells"].as_array().unwrap().iter().find(|c| c["model"] == "rf" && c["optimizer"] == "grid").unwrap();
    assert_eq!(ev["test1"]["accuracy"], rf_grid["test1_accuracy"]);
    assert_eq!(ev["test2"]["accuracy"], rf_grid["test2_accuracy"]);
}

#[test]
fn failed_run_names_stage_and_leaves_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let (code, v, stderr) =
        run(&["run", "--config", s(&cfg), "--out", s(dir.path()), "text.embedding_file=\"/no/vectors.txt\""]);
    assert_eq!(code, 1);
    assert_eq!(v["stage"], "phase1");
    assert!(stderr.contains("phase1"));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], false);
}

#[test]
fn hpo_and_train_predict_reuse_a_saved_sentiment_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let (code, _, _) = run(&["train-sentiment", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code, 0);
    let sentiment = dir.path().join("models/sentiment.json");
    let (code, v, _) = run(&[
        "hpo",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--sentiment",
        s(&sentiment),
        "phase2.models=[\"svm\"]",
        "phase2.optimizers=[\"grid\"]",
    ]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["cells"].as_array().unwrap().len(), 1);
    assert!(dir.path().join("shift_report.csv").is_file());

    let (code, v, _) = run(&[
        "train-predict",
        "--kind",
        "xgb",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--sentiment",
        s(&sentiment),
    ]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["kind"], "xgb");
    assert!(dir.path().join("models/xgb_fixed.json").is_file());
    let f1 = v["test1"]["per_label"][1]["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
}
