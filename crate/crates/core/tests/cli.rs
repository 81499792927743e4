use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use docnli::aggregate::{parse_predictions, write_predictions, PredictionRecord};
use docnli::corpus::{load_corpus, save_corpus, Corpus};
use docnli::synthetic;
use serde_json::{json, Value};
use tempfile::TempDir;

const RELEASE: &str = r#"{
  "documents": [
    {"id": 7, "file_name": "a.txt", "document_type": "search-pdf", "url": "x",
     "text": "Confidential. Employees may receive it.",
     "spans": [[0, 13], [14, 39]],
     "annotation_sets": [{"annotations": {
        "nda-2": {"choice": "NotMentioned", "spans": []},
        "nda-11": {"choice": "Entailment", "spans": [1]}}}]}
  ],
  "labels": {
    "nda-11": {"short_description": "Sharing", "hypothesis": "Receiving Party may share."},
    "nda-2": {"short_description": "Technical", "hypothesis": "Only technical information."}
  }
}"#;

fn docnli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docnli"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synthetic_corpus(dir: &Path, documents: usize) -> (Corpus, PathBuf) {
    let corpus = synthetic::generate(documents, 3);
    let path = dir.join("corpus.json");
    save_corpus(&corpus, &path).unwrap();
    (corpus, path)
}

fn write_config(dir: &Path, corpus: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let out = docnli(&["init-config"]);
    assert!(out.status.success());
    let mut config: Value = serde_json::from_slice(&out.stdout).unwrap();
    config["paths"]["train_corpus"] = json!(s(corpus));
    config["paths"]["vocab"] = json!("vocab.txt");
    config["vocab"]["target_size"] = json!(300);
    edit(&mut config);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn missing_input_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let out = docnli(&["import", s(&dir.path().join("nope.json")), "-o", s(&dir.path().join("c.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(docnli(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(docnli(&["--help"]).status.code(), Some(0));
}

#[test]
fn import_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let release = dir.path().join("release.json");
    std::fs::write(&release, RELEASE).unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert!(docnli(&["import", s(&release), "-o", s(&a)]).status.success());
    assert!(docnli(&["import", s(&release), "-o", s(&b)]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let corpus = load_corpus(&a).unwrap();
    assert_eq!(corpus.documents[0].doc_id, "7");
    assert_eq!(corpus.hypotheses.len(), 2);
}

#[test]
fn init_config_round_trips() {
    for preset in ["default", "synthetic"] {
        let out = docnli(&["init-config", "--preset", preset]);
        assert!(out.status.success());
        let config: docnli::cli::ExperimentConfig = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(config.to_json().as_bytes(), out.stdout.as_slice());
    }
    let grid = docnli(&["init-config", "--grid"]);
    let spec: docnli::cli::GridSpec = serde_json::from_slice(&grid.stdout).unwrap();
    assert_eq!(spec, docnli::cli::GridSpec::base_search_space());
}

#[test]
fn nonpositive_lambda_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (_, corpus) = synthetic_corpus(dir.path(), 3);
    let config = write_config(dir.path(), &corpus, |c| c["train"]["lambda"] = json!(0.0));
    let out = docnli(&["train", "-c", s(&config)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}

#[test]
fn malformed_dump_names_the_line() {
    let dir = TempDir::new().unwrap();
    let (_, corpus) = synthetic_corpus(dir.path(), 3);
    let dump = dir.path().join("dump.jsonl");
    std::fs::write(&dump, "{\"doc_id\":\"x\",\"hypothesis_id\":1}\n{oops\n").unwrap();
    let out = docnli(&["eval", "--gold", s(&corpus), "--predictions", s(&dump)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn perfect_dump_scores_one() {
    let dir = TempDir::new().unwrap();
    let (corpus, path) = synthetic_corpus(dir.path(), 6);
    let mut records = Vec::new();
    for doc in &corpus.documents {
        for (&h, ann) in &doc.annotations {
            records.push(PredictionRecord {
                doc_id: doc.doc_id.clone(),
                hypothesis_id: h,
                nli: Some(ann.label.one_hot()),
                spans: (0..doc.spans.len()).map(|k| (k, f64::from(u8::from(ann.is_evidence(k))))).collect(),
            });
        }
    }
    let dump = dir.path().join("dump.jsonl");
    std::fs::write(&dump, write_predictions(&records)).unwrap();
    let report = dir.path().join("report.json");
    let out = docnli(&["eval", "--gold", s(&path), "--predictions", s(&dump), "-o", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    for key in ["map", "p_at_r80", "nli_accuracy", "f1_contradiction", "f1_entailment"] {
        assert_eq!(report[key], json!(1.0), "{key}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("System"));
}

#[test]
fn majority_baseline_predicts_one_label_per_hypothesis() {
    let dir = TempDir::new().unwrap();
    let (corpus, path) = synthetic_corpus(dir.path(), 6);
    let dump = dir.path().join("majority.jsonl");
    let out = docnli(&["baseline", "--kind", "majority", "--train", s(&path), "--corpus", s(&path), "-o", s(&dump)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = parse_predictions(&std::fs::read_to_string(&dump).unwrap()).unwrap();
    assert_eq!(records.len(), corpus.len() * corpus.hypotheses.len());
    for h in &corpus.hypotheses {
        let labels: Vec<_> = records.iter().filter(|r| r.hypothesis_id == h.id).map(|r| r.nli).collect();
        assert!(labels.windows(2).all(|w| w[0] == w[1]));
    }
    let bad = docnli(&["baseline", "--kind", "oracle", "--train", s(&path), "--corpus", s(&path), "-o", s(&dump)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn short_document_has_one_context() {
    let dir = TempDir::new().unwrap();
    let (corpus, path) = synthetic_corpus(dir.path(), 3);
    let config = write_config(dir.path(), &path, |_| {});
    assert!(docnli(&["build-vocab", "-c", s(&config)]).status.success());
    let doc = &corpus.documents[0];
    let out = docnli(&["inspect-contexts", "-c", s(&config), "--doc-id", &doc.doc_id, "--hypothesis", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1);
    let ctx: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(ctx["covered_spans"].as_array().unwrap().len(), doc.spans.len());

    let missing = docnli(&["inspect-contexts", "-c", s(&config), "--doc-id", "nope"]);
    assert_eq!(missing.status.code(), Some(2));
}
