//! Document-level predictions from per-context outputs, and the JSON-lines
//! prediction dump shared by every system.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::NliLabel;
use crate::model::ScoredContext;

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("span {0} is not covered by any context")]
    UncoveredSpan(usize),
    #[error("no context covers any span")]
    NoContexts,
    #[error("context has {probs} span probabilities for {spans} covered spans")]
    ShapeMismatch { spans: usize, probs: usize },
    #[error("prediction dump line {line}: {message}")]
    Dump { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliAggregation {
    /// Weight each context by its mean span probability.
    #[default]
    Weighted,
    Unweighted,
}

/// Borrowed view of one context's output.
#[derive(Debug, Clone, Copy)]
pub struct ContextOutput<'a> {
    /// Document span ids, in marker order.
    pub covered_spans: &'a [usize],
    pub span_probs: &'a [f64],
    pub nli_probs: &'a [f64],
}

impl<'a> From<&'a ScoredContext> for ContextOutput<'a> {
    fn from(sc: &'a ScoredContext) -> Self {
        ContextOutput {
            covered_spans: &sc.context.covered_spans,
            span_probs: &sc.prediction.span_probs,
            nli_probs: &sc.prediction.nli_probs,
        }
    }
}

fn check_shapes(outputs: &[ContextOutput]) -> Result<(), AggregateError> {
    for o in outputs {
        if o.covered_spans.len() != o.span_probs.len() {
            return Err(AggregateError::ShapeMismatch {
                spans: o.covered_spans.len(),
                probs: o.span_probs.len(),
            });
        }
    }
    Ok(())
}

/// Mean probability of each span over the contexts that contain it, for
/// every id in `span_ids`.
pub fn aggregate_spans(outputs: &[ContextOutput], span_ids: &[usize]) -> Result<Vec<(usize, f64)>, AggregateError> {
    check_shapes(outputs)?;
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for o in outputs {
        for (&id, &p) in o.covered_spans.iter().zip(o.span_probs) {
            let entry = sums.entry(id).or_default();
            entry.0 += p;
            entry.1 += 1;
        }
    }
    span_ids
        .iter()
        .map(|&id| {
            sums.get(&id)
                .map(|&(s, m)| (id, s / m as f64))
                .ok_or(AggregateError::UncoveredSpan(id))
        })
        .collect()
}

/// Combined NLI distribution. Contexts without spans are skipped. In weighted
/// mode a total weight below 1e-12 falls back to the plain mean with a
/// warning.
pub fn aggregate_nli(outputs: &[ContextOutput], mode: NliAggregation) -> Result<Vec<f64>, AggregateError> {
    check_shapes(outputs)?;
    let used: Vec<&ContextOutput> = outputs.iter().filter(|o| !o.covered_spans.is_empty()).collect();
    let classes = used.first().ok_or(AggregateError::NoContexts)?.nli_probs.len();
    let mut weights: Vec<f64> = match mode {
        NliAggregation::Weighted => used
            .iter()
            .map(|o| o.span_probs.iter().sum::<f64>() / o.span_probs.len() as f64)
            .collect(),
        NliAggregation::Unweighted => vec![1.0; used.len()],
    };
    let mut total: f64 = weights.iter().sum();
    if total < 1e-12 {
        warn!("NLI weights sum to {total:e}; using the unweighted mean");
        weights = vec![1.0; used.len()];
        total = used.len() as f64;
    }
    let mut out = vec![0.0; classes];
    for (o, w) in used.iter().zip(&weights) {
        for (acc, p) in out.iter_mut().zip(o.nli_probs) {
            *acc += w * p;
        }
    }
    Ok(out.into_iter().map(|v| v / total).collect())
}

/// Index of the largest value; ties go to the earliest (E, then C, then N).
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentPrediction {
    pub doc_id: String,
    pub hypothesis_id: u32,
    pub span_probs: Vec<(usize, f64)>,
    pub nli_probs: Vec<f64>,
    pub nli_label: NliLabel,
}

pub fn aggregate_document(
    doc_id: &str,
    hypothesis_id: u32,
    outputs: &[ContextOutput],
    span_ids: &[usize],
    mode: NliAggregation,
) -> Result<DocumentPrediction, AggregateError> {
    let span_probs = aggregate_spans(outputs, span_ids)?;
    let nli_probs = aggregate_nli(outputs, mode)?;
    Ok(DocumentPrediction {
        doc_id: doc_id.to_string(),
        hypothesis_id,
        span_probs,
        nli_label: NliLabel::from_index(argmax(&nli_probs)).expect("three classes"),
        nli_probs,
    })
}

/// One line of the prediction dump. A missing `nli` or empty `spans` leaves
/// the pair out of the corresponding metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub hypothesis_id: u32,
    #[serde(default)]
    pub nli: Option<[f64; 3]>,
    #[serde(default)]
    pub spans: Vec<(usize, f64)>,
}

impl From<&DocumentPrediction> for PredictionRecord {
    fn from(p: &DocumentPrediction) -> Self {
        PredictionRecord {
            doc_id: p.doc_id.clone(),
            hypothesis_id: p.hypothesis_id,
            nli: p.nli_probs.as_slice().try_into().ok(),
            spans: p.span_probs.clone(),
        }
    }
}

pub fn write_predictions(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parse a dump; blank lines are skipped and errors name the 1-based line.
pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRecord>, AggregateError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AggregateError::Dump {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
