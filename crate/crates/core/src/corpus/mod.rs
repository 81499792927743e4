//! Annotated contract corpus: data model, canonical on-disk format and validation.
//!
//! Spans are addressed by their index in [`Document::spans`]; all offsets are
//! counted in Unicode scalar values (not bytes) so that files produced by
//! Python tooling round-trip without conversion.

mod contractnli;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contractnli::{import_contractnli, import_contractnli_str};
pub use split::{largest_remainder, stratified_split, SplitRatios};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus JSON: {0}")]
    Parse(String),
    #[error("invalid document `{doc_id}`, field `{field}`: {message}")]
    Validation {
        doc_id: String,
        field: String,
        message: String,
    },
    #[error("unsupported dataset layout: {0}")]
    UnsupportedVersion(String),
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
}

impl CorpusError {
    fn validation(doc_id: &str, field: &str, message: impl Into<String>) -> Self {
        CorpusError::Validation {
            doc_id: doc_id.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Document-level inference label. Declaration order doubles as the
/// tie-breaking priority used throughout the crate (E > C > N).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    NotMentioned,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [
        NliLabel::Entailment,
        NliLabel::Contradiction,
        NliLabel::NotMentioned,
    ];

    pub fn index(self) -> usize {
        match self {
            NliLabel::Entailment => 0,
            NliLabel::Contradiction => 1,
            NliLabel::NotMentioned => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut y = [0.0; 3];
        y[self.index()] = 1.0;
        y
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NliLabel::Entailment => "entailment",
            NliLabel::Contradiction => "contradiction",
            NliLabel::NotMentioned => "not_mentioned",
        }
    }

    /// Whether evidence spans are defined for this label.
    pub fn has_evidence(self) -> bool {
        self != NliLabel::NotMentioned
    }
}

impl std::fmt::Display for NliLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: u32,
    pub title: String,
    pub text: String,
}

/// Character range of one evidence-eligible span, `[char_start, char_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct SpanRecord {
    pub char_start: usize,
    pub char_end: usize,
}

impl SpanRecord {
    pub fn new(char_start: usize, char_end: usize) -> Self {
        SpanRecord {
            char_start,
            char_end,
        }
    }

    pub fn len(&self) -> usize {
        self.char_end.saturating_sub(self.char_start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<(usize, usize)> for SpanRecord {
    fn from((s, e): (usize, usize)) -> Self {
        SpanRecord::new(s, e)
    }
}

impl From<SpanRecord> for (usize, usize) {
    fn from(span: SpanRecord) -> Self {
        (span.char_start, span.char_end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: NliLabel,
    pub evidence: Vec<usize>,
}

impl Annotation {
    pub fn not_mentioned() -> Self {
        Annotation {
            label: NliLabel::NotMentioned,
            evidence: Vec::new(),
        }
    }

    pub fn is_evidence(&self, span_id: usize) -> bool {
        self.evidence.contains(&span_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocFormat {
    Plain,
    Html,
    Pdf,
}

impl DocFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DocFormat::Plain => "plain",
            DocFormat::Html => "html",
            DocFormat::Pdf => "pdf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub format: DocFormat,
    pub text: String,
    pub spans: Vec<SpanRecord>,
    pub annotations: BTreeMap<u32, Annotation>,
}

impl Document {
    /// Text of span `span_id`, sliced by character offsets.
    pub fn span_text(&self, span_id: usize) -> &str {
        let span = self.spans[span_id];
        char_slice(&self.text, span.char_start, span.char_end)
    }

    pub fn annotation(&self, hypothesis_id: u32) -> Option<&Annotation> {
        self.annotations.get(&hypothesis_id)
    }
}

/// Slice `text` by character offsets `[start, end)`.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let byte_start = indices.nth(start).unwrap_or(text.len());
    let byte_end = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        byte_start
    };
    &text[byte_start..byte_end]
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub hypotheses: Vec<Hypothesis>,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn hypothesis(&self, id: u32) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.id == id)
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Document counts per format, in format order.
    pub fn format_counts(&self) -> BTreeMap<DocFormat, usize> {
        let mut counts = BTreeMap::new();
        for doc in &self.documents {
            *counts.entry(doc.format).or_insert(0) += 1;
        }
        counts
    }

    /// Check every structural invariant of the canonical format.
    pub fn validate(&self) -> Result<()> {
        let corpus_id = "<corpus>";
        for (i, hyp) in self.hypotheses.iter().enumerate() {
            if hyp.id as usize != i + 1 {
                return Err(CorpusError::validation(
                    corpus_id,
                    "hypotheses.id",
                    format!("hypothesis ids must be contiguous from 1, found {} at position {i}", hyp.id),
                ));
            }
            if hyp.text.trim().is_empty() {
                return Err(CorpusError::validation(
                    corpus_id,
                    "hypotheses.text",
                    format!("hypothesis {} has empty text", hyp.id),
                ));
            }
        }
        let declared: BTreeSet<u32> = self.hypotheses.iter().map(|h| h.id).collect();

        let mut seen = HashSet::new();
        for doc in &self.documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::validation(&doc.doc_id, "doc_id", "duplicate doc_id"));
            }
            validate_document(doc, &declared)?;
        }
        Ok(())
    }
}

fn validate_document(doc: &Document, declared: &BTreeSet<u32>) -> Result<()> {
    let id = doc.doc_id.as_str();
    let text_len = doc.text.chars().count();
    let mut prev_end = 0;
    for (i, span) in doc.spans.iter().enumerate() {
        if span.char_start >= span.char_end || span.char_end > text_len {
            return Err(CorpusError::validation(
                id,
                "spans",
                format!(
                    "span {i} [{}, {}) is empty or exceeds text length {text_len}",
                    span.char_start, span.char_end
                ),
            ));
        }
        if span.char_start < prev_end {
            return Err(CorpusError::validation(
                id,
                "spans",
                format!("span {i} starts at {} before the previous span ends at {prev_end}", span.char_start),
            ));
        }
        prev_end = span.char_end;
    }

    let annotated: BTreeSet<u32> = doc.annotations.keys().copied().collect();
    if let Some(missing) = declared.difference(&annotated).next() {
        return Err(CorpusError::validation(
            id,
            "annotations",
            format!("missing annotation for hypothesis {missing}"),
        ));
    }
    if let Some(extra) = annotated.difference(declared).next() {
        return Err(CorpusError::validation(
            id,
            "annotations",
            format!("annotation for undeclared hypothesis {extra}"),
        ));
    }
    for (hyp_id, ann) in &doc.annotations {
        let field = format!("annotations.{hyp_id}.evidence");
        if ann.evidence.is_empty() == ann.label.has_evidence() {
            let message = if ann.label.has_evidence() {
                format!("label {} requires at least one evidence span", ann.label)
            } else {
                "label not_mentioned must have empty evidence".to_string()
            };
            return Err(CorpusError::validation(id, &field, message));
        }
        let mut unique = HashSet::new();
        for &span_id in &ann.evidence {
            if span_id >= doc.spans.len() {
                return Err(CorpusError::validation(
                    id,
                    &field,
                    format!("span id {span_id} out of range ({} spans)", doc.spans.len()),
                ));
            }
            if !unique.insert(span_id) {
                return Err(CorpusError::validation(id, &field, format!("duplicate span id {span_id}")));
            }
        }
    }
    Ok(())
}

/// Parse and validate a canonical corpus from a JSON string.
pub fn parse_corpus(json: &str) -> Result<Corpus> {
    let corpus: Corpus = serde_json::from_str(json).map_err(|e| CorpusError::Parse(e.to_string()))?;
    corpus.validate()?;
    Ok(corpus)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&json)
}

/// Canonical serialization: compact JSON, object keys sorted, trailing newline.
pub fn to_canonical_json(corpus: &Corpus) -> String {
    // serde_json::Value keeps object keys in a BTreeMap, which sorts them.
    let value = serde_json::to_value(corpus).expect("corpus is always representable as JSON");
    let mut out = serde_json::to_string(&value).expect("JSON value serializes");
    out.push('\n');
    out
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_canonical_json(corpus)).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"documents":[{"annotations":{"1":{"evidence":[],"label":"not_mentioned"}},"doc_id":"d1","format":"plain","spans":[[0,12]],"text":"Hello world."}],"hypotheses":[{"id":1,"text":"Some hypothesis.","title":"h"}]}
"#;

    #[test]
    fn minimal_corpus_loads() {
        let corpus = parse_corpus(MINIMAL).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.documents[0].span_text(0), "Hello world.");
        assert_eq!(corpus.documents[0].annotations[&1].label, NliLabel::NotMentioned);
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let corpus = parse_corpus(MINIMAL).unwrap();
        assert_eq!(to_canonical_json(&corpus), MINIMAL);
    }

    #[test]
    fn evidence_on_not_mentioned_is_rejected() {
        let bad = MINIMAL.replace(r#""evidence":[]"#, r#""evidence":[0]"#);
        match parse_corpus(&bad) {
            Err(CorpusError::Validation { doc_id, field, .. }) => {
                assert_eq!(doc_id, "d1");
                assert_eq!(field, "annotations.1.evidence");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn entailment_without_evidence_is_rejected() {
        let bad = MINIMAL.replace("not_mentioned", "entailment");
        assert!(matches!(parse_corpus(&bad), Err(CorpusError::Validation { .. })));
    }

    #[test]
    fn missing_annotation_is_rejected_not_imputed() {
        let bad = MINIMAL.replace(
            r#"[{"id":1,"text":"Some hypothesis.","title":"h"}]"#,
            r#"[{"id":1,"text":"Some hypothesis.","title":"h"},{"id":2,"text":"Other.","title":"g"}]"#,
        );
        let err = parse_corpus(&bad).unwrap_err();
        assert!(err.to_string().contains("missing annotation for hypothesis 2"), "{err}");
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(parse_corpus("{\"documents\": ["), Err(CorpusError::Parse(_))));
    }

    #[test]
    fn overlapping_and_out_of_range_spans_are_rejected() {
        let overlap = MINIMAL.replace("[[0,12]]", "[[0,6],[5,12]]");
        assert!(matches!(parse_corpus(&overlap), Err(CorpusError::Validation { .. })));
        let too_long = MINIMAL.replace("[[0,12]]", "[[0,13]]");
        assert!(matches!(parse_corpus(&too_long), Err(CorpusError::Validation { .. })));
    }

    #[test]
    fn non_contiguous_hypothesis_ids_are_rejected() {
        let bad = MINIMAL.replace(r#""id":1"#, r#""id":2"#).replace(r#""1":{"#, r#""2":{"#);
        assert!(matches!(parse_corpus(&bad), Err(CorpusError::Validation { .. })));
    }

    #[test]
    fn char_slice_counts_scalars_not_bytes() {
        let text = "né → ok";
        assert_eq!(char_slice(text, 0, 2), "né");
        assert_eq!(char_slice(text, 3, 4), "→");
        assert_eq!(char_slice(text, 5, 7), "ok");
        assert_eq!(char_slice(text, 7, 7), "");
    }

    #[test]
    fn label_order_and_one_hot() {
        assert_eq!(NliLabel::Contradiction.one_hot(), [0.0, 1.0, 0.0]);
        assert_eq!(NliLabel::from_index(2), Some(NliLabel::NotMentioned));
        assert!(NliLabel::Entailment < NliLabel::Contradiction);
        assert_eq!(serde_json::to_string(&NliLabel::NotMentioned).unwrap(), "\"not_mentioned\"");
    }
}
