//! Adapter for the published ContractNLI JSON distribution.
//!
//! Kept separate from the canonical model: layout drift in the release only
//! touches this file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{Annotation, Corpus, CorpusError, DocFormat, Document, Hypothesis, NliLabel, Result, SpanRecord};

#[derive(Deserialize)]
struct Release {
    #[serde(default)]
    version: Option<serde_json::Value>,
    documents: Vec<ReleaseDocument>,
    labels: BTreeMap<String, ReleaseLabel>,
}

#[derive(Deserialize)]
struct ReleaseLabel {
    #[serde(default)]
    short_description: String,
    hypothesis: String,
}

#[derive(Deserialize)]
struct ReleaseDocument {
    id: serde_json::Value,
    text: String,
    #[serde(default)]
    document_type: Option<String>,
    spans: Vec<(usize, usize)>,
    annotation_sets: Vec<ReleaseAnnotationSet>,
}

#[derive(Deserialize)]
struct ReleaseAnnotationSet {
    annotations: BTreeMap<String, ReleaseAnnotation>,
}

#[derive(Deserialize)]
struct ReleaseAnnotation {
    choice: String,
    spans: Vec<usize>,
}

/// Numeric suffix of a release label key such as `nda-11`.
fn label_number(key: &str) -> Option<u32> {
    key.rsplit('-').next()?.parse().ok()
}

fn doc_format(doc_id: &str, document_type: Option<&str>) -> Result<DocFormat> {
    match document_type {
        Some("search-pdf") => Ok(DocFormat::Pdf),
        Some("sec-text") => Ok(DocFormat::Plain),
        Some("sec-html") => Ok(DocFormat::Html),
        other => Err(CorpusError::validation(
            doc_id,
            "document_type",
            format!("unknown document type {other:?}"),
        )),
    }
}

fn choice(doc_id: &str, raw: &str) -> Result<NliLabel> {
    match raw {
        "Entailment" => Ok(NliLabel::Entailment),
        "Contradiction" => Ok(NliLabel::Contradiction),
        "NotMentioned" => Ok(NliLabel::NotMentioned),
        other => Err(CorpusError::validation(doc_id, "choice", format!("unknown label {other:?}"))),
    }
}

/// Import a release file from an in-memory string.
///
/// Release label keys (`nda-1`, `nda-2`, `nda-4`, ...) are renumbered to
/// contiguous ids in ascending order of their numeric suffix.
pub fn import_contractnli_str(json: &str) -> Result<Corpus> {
    let release: Release = serde_json::from_str(json).map_err(|e| {
        // Distinguish "not JSON" from "JSON of another shape".
        if serde_json::from_str::<serde_json::Value>(json).is_ok() {
            CorpusError::UnsupportedVersion(e.to_string())
        } else {
            CorpusError::Parse(e.to_string())
        }
    })?;
    if let Some(version) = &release.version {
        return Err(CorpusError::UnsupportedVersion(format!("unexpected version field {version}")));
    }

    let mut keys: Vec<(u32, &String)> = Vec::with_capacity(release.labels.len());
    for key in release.labels.keys() {
        let number = label_number(key)
            .ok_or_else(|| CorpusError::UnsupportedVersion(format!("label key {key:?} has no numeric suffix")))?;
        keys.push((number, key));
    }
    keys.sort();
    let key_to_id: BTreeMap<&str, u32> = keys
        .iter()
        .enumerate()
        .map(|(i, (_, key))| (key.as_str(), i as u32 + 1))
        .collect();
    let hypotheses = keys
        .iter()
        .enumerate()
        .map(|(i, (_, key))| {
            let label = &release.labels[*key];
            Hypothesis {
                id: i as u32 + 1,
                title: label.short_description.clone(),
                text: label.hypothesis.clone(),
            }
        })
        .collect();

    let mut documents = Vec::with_capacity(release.documents.len());
    for doc in release.documents {
        let doc_id = match &doc.id {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let format = doc_format(&doc_id, doc.document_type.as_deref())?;
        let set = match doc.annotation_sets.as_slice() {
            [set] => set,
            sets => {
                return Err(CorpusError::UnsupportedVersion(format!(
                    "document {doc_id} has {} annotation sets, expected exactly one",
                    sets.len()
                )))
            }
        };
        let mut annotations = BTreeMap::new();
        for (key, ann) in &set.annotations {
            let id = *key_to_id.get(key.as_str()).ok_or_else(|| {
                CorpusError::validation(&doc_id, "annotation_sets", format!("undeclared label {key:?}"))
            })?;
            annotations.insert(
                id,
                Annotation {
                    label: choice(&doc_id, &ann.choice)?,
                    evidence: ann.spans.clone(),
                },
            );
        }
        documents.push(Document {
            doc_id,
            format,
            text: doc.text,
            spans: doc.spans.into_iter().map(SpanRecord::from).collect(),
            annotations,
        });
    }

    let corpus = Corpus { hypotheses, documents };
    corpus.validate()?;
    Ok(corpus)
}

pub fn import_contractnli(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    import_contractnli_str(&json)
}
