use std::path::Path;
use std::process::{Command, Output};

fn uedetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uedetect"))
        .args(args)
        .output()
        .expect("binary runs")
}

const SMALL: [&str; 6] = [
    "--set",
    "corpus.per_class=5",
    "--set",
    "pipeline.app_encoder.epochs=20",
    "--set",
    "pipeline.scene_encoder.epochs=20",
];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(SMALL);
    v
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn end_to_end_commands_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let model = tmp.path().join("model");
    let out = uedetect(&with_small(&["gen-corpus", p(&corpus)]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let sg = uedetect(&["build-sg", p(&corpus.join("fixtures/App1.appir"))]);
    assert_eq!(sg.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&sg.stdout).unwrap();
    assert_eq!(v["app_id"], "App1");
    let all = uedetect(&["build-sg", p(&corpus.join("fixtures"))]);
    let v: serde_json::Value = serde_json::from_slice(&all.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 5);

    let train = uedetect(&with_small(&["train", "--model", p(&model), p(&corpus)]));
    assert_eq!(train.status.code(), Some(0), "{}", String::from_utf8_lossy(&train.stderr));
    let preds = uedetect(&["classify", "--model", p(&model), p(&corpus.join("fixtures"))]);
    assert_eq!(preds.status.code(), Some(0), "{}", String::from_utf8_lossy(&preds.stderr));
    let v: serde_json::Value = serde_json::from_slice(&preds.stdout).unwrap();
    assert_eq!(v.as_object().unwrap().len(), 5);
    let enc = uedetect(&["encode", "--model", p(&model), p(&corpus.join("fixtures/App2.appir"))]);
    let v: serde_json::Value = serde_json::from_slice(&enc.stdout).unwrap();
    assert!(v["App2"].as_array().unwrap().len() > 1);

    let report = tmp.path().join("report.json");
    let eval = uedetect(&with_small(&["eval", p(&corpus), "--out", p(&report)]));
    assert_eq!(eval.status.code(), Some(0), "{}", String::from_utf8_lossy(&eval.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["static_plain"]["transitions"]["f1"], 1.0);
}

#[test]
fn validation_failures_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.appir");
    std::fs::write(&bad, "appir/1\nnonsense\n").unwrap();
    assert_eq!(uedetect(&["build-sg", p(&bad)]).status.code(), Some(1));
    assert_eq!(uedetect(&["--set", "corpus.per_class=0", "eval"]).status.code(), Some(1));
    assert_eq!(uedetect(&["--set", "corpus.bogus=1", "eval"]).status.code(), Some(1));
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[pipeline\n").unwrap();
    assert_eq!(uedetect(&["--config", p(&cfg), "eval"]).status.code(), Some(1));
    let missing = tmp.path().join("none");
    assert_eq!(uedetect(&["classify", "--model", p(&missing), p(&bad)]).status.code(), Some(1));
    assert_eq!(uedetect(&["eval", p(&missing)]).status.code(), Some(1));
}

#[test]
fn stoplist_override_reaches_imprints() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    assert_eq!(uedetect(&["--set", "corpus.per_class=1", "gen-corpus", p(&corpus)]).status.code(), Some(0));
    let app = corpus.join("fixtures/App1.appir");
    let tokens = |out: Output| -> Vec<String> {
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|n| n["attributes"]["imprint_tokens"].as_array().unwrap().clone())
            .map(|t| t.as_str().unwrap().to_string())
            .collect()
    };
    let plain = tokens(uedetect(&["build-sg", p(&app)]));
    assert!(plain.iter().any(|t| t == "api"));
    let stopped = tokens(uedetect(&["--set", r#"pipeline.stoplist=["api"]"#, "build-sg", p(&app)]));
    assert!(!stopped.iter().any(|t| t == "api"));
    assert!(stopped.iter().any(|t| t == "www"));
}

#[test]
fn config_file_is_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[corpus]\nper_class = 3\nseed = 11\n").unwrap();
    let corpus = tmp.path().join("corpus");
    let out = uedetect(&["--config", p(&cfg), "gen-corpus", p(&corpus)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_dir(corpus.join("apps")).unwrap().count(), 2 * 15);
    let spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(corpus.join("corpus.json")).unwrap()).unwrap();
    assert_eq!(spec["seed"], 11);
}
