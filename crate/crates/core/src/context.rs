//! Dynamic context segmentation of long documents and model-input assembly.
//!
//! A document is cut into overlapping token windows so that every span lies
//! unsplit inside at least one window, with `n` tokens of left context where
//! the window length allows it. Each window becomes one model input laid out
//! as `[CLS] hypothesis [SEP] contract-with-[SPAN]-markers [SEP] [PAD]...`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Annotation, Hypothesis, NliLabel};
use crate::segmentation::{TokenizedDocument, Vocabulary, CLS, PAD, SEP, SPAN};

/// Positions of the `[CLS]`, `[SEP]`, `[SEP]` specials around the hypothesis.
pub const NUM_SPECIALS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("span {span_id} has {tokens} tokens, more than the {window}-token window")]
    SpanTooLong { span_id: usize, tokens: usize, window: usize },
    #[error("input of {length} positions exceeds the {max}-position limit")]
    LengthOverflow { length: usize, max: usize },
    #[error("invalid segmentation config: {0}")]
    InvalidConfig(String),
    #[error("hypothesis {0} has no tokens")]
    EmptyHypothesis(u32),
    #[error("vocabulary has no symbol for hypothesis {0}")]
    MissingSymbol(u32),
}

/// Window length `l` (contract tokens) and minimum left context `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub max_context_length: usize,
    pub min_surrounding_tokens: usize,
}

impl SegmentationConfig {
    pub fn new(max_context_length: usize, min_surrounding_tokens: usize) -> Result<Self, ContextError> {
        let cfg = SegmentationConfig {
            max_context_length,
            min_surrounding_tokens,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        if self.min_surrounding_tokens == 0 || self.min_surrounding_tokens >= self.max_context_length {
            return Err(ContextError::InvalidConfig(format!(
                "need 0 < n < l, got n = {}, l = {}",
                self.min_surrounding_tokens, self.max_context_length
            )));
        }
        Ok(())
    }
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            max_context_length: 512 - NUM_SPECIALS,
            min_surrounding_tokens: 128,
        }
    }
}

/// Hypothesis rendering inside the model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisMode {
    /// The hypothesis' own subword tokens.
    #[default]
    Text,
    /// A single reserved per-hypothesis symbol token.
    Symbol,
}

/// Per-context supervision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Teacher {
    /// 1 if the covered span (same order as `covered_spans`) is evidence.
    pub span_labels: Vec<u8>,
    pub nli: NliLabel,
    pub has_evidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub context_id: usize,
    pub doc_id: String,
    /// Document-token range `[start, end)`.
    pub token_range: (usize, usize),
    /// Document span ids of the spans lying entirely inside `token_range`.
    pub covered_spans: Vec<usize>,
    /// Document-token index of each covered span's first token.
    #[serde(skip)]
    pub span_token_starts: Vec<usize>,
    /// Offsets of the `[SPAN]` markers within the contract segment.
    pub span_marker_positions: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher: Option<Teacher>,
}

impl Context {
    pub fn len(&self) -> usize {
        self.token_range.1 - self.token_range.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Contract-segment length including markers.
    pub fn window_len(&self) -> usize {
        self.len() + self.covered_spans.len()
    }
}

/// Split `doc` into overlapping windows of at most `l` tokens.
///
/// Each window is extended as far as `l` allows; the next one restarts `n`
/// tokens before the first span not yet fully covered, moved right only when
/// that span would not otherwise fit. Every span is therefore fully inside
/// some window, and has `n` tokens of left context there whenever
/// `span length + n <= l` (or the document start is closer).
pub fn segment(doc: &TokenizedDocument, cfg: SegmentationConfig) -> Result<Vec<Context>, ContextError> {
    cfg.validate()?;
    let l = cfg.max_context_length;
    let n = cfg.min_surrounding_tokens;
    let total = doc.num_tokens();
    let ranges: Vec<(usize, usize)> = (0..doc.num_spans()).map(|k| doc.span_range(k)).collect();
    if let Some((k, &(s, e))) = ranges.iter().enumerate().find(|(_, (s, e))| e - s > l) {
        return Err(ContextError::SpanTooLong {
            span_id: doc.span_ids[k],
            tokens: e - s,
            window: l,
        });
    }

    let mut contexts = Vec::new();
    let mut start = 0;
    let mut first_uncovered = 0;
    while first_uncovered < ranges.len() {
        let end = (start + l).min(total);
        let mut covered = Vec::new();
        let mut starts = Vec::new();
        let mut markers = Vec::new();
        for (k, &(s, e)) in ranges.iter().enumerate() {
            if s >= end {
                break;
            }
            if s >= start && e <= end {
                markers.push(s - start + covered.len());
                covered.push(doc.span_ids[k]);
                starts.push(s);
            }
        }
        contexts.push(Context {
            context_id: contexts.len(),
            doc_id: doc.doc_id.clone(),
            token_range: (start, end),
            covered_spans: covered,
            span_token_starts: starts,
            span_marker_positions: markers,
            teacher: None,
        });
        while first_uncovered < ranges.len() && ranges[first_uncovered].1 <= end {
            first_uncovered += 1;
        }
        if let Some(&(s, e)) = ranges.get(first_uncovered) {
            start = s.saturating_sub(n).max(e.saturating_sub(l));
        }
    }
    Ok(contexts)
}

/// Segment for a fixed total sequence length. The window starts at
/// `max_sequence_length - hypothesis_len - 3` and shrinks until every
/// context, markers included, fits.
pub fn segment_for_sequence(
    doc: &TokenizedDocument,
    hypothesis_len: usize,
    max_sequence_length: usize,
    min_surrounding_tokens: usize,
) -> Result<Vec<Context>, ContextError> {
    let overhead = hypothesis_len + NUM_SPECIALS;
    let mut l = max_sequence_length.checked_sub(overhead).ok_or(ContextError::LengthOverflow {
        length: overhead,
        max: max_sequence_length,
    })?;
    loop {
        let n = min_surrounding_tokens.min(l.saturating_sub(1));
        let contexts = segment(doc, SegmentationConfig::new(l, n)?)?;
        let longest = contexts.iter().map(|c| overhead + c.window_len()).max().unwrap_or(overhead);
        if longest <= max_sequence_length {
            return Ok(contexts);
        }
        // Every removed token can also remove one marker.
        l -= (longest - max_sequence_length).div_ceil(2).min(l);
        if l < 2 {
            return Err(ContextError::LengthOverflow {
                length: longest,
                max: max_sequence_length,
            });
        }
    }
}

/// Attach supervision from the (doc, hypothesis) annotation.
pub fn align_teacher(mut ctx: Context, ann: &Annotation) -> Context {
    let span_labels: Vec<u8> = ctx
        .covered_spans
        .iter()
        .map(|&id| u8::from(ann.is_evidence(id)))
        .collect();
    let has_evidence = span_labels.contains(&1);
    ctx.teacher = Some(Teacher {
        span_labels,
        nli: ann.label,
        has_evidence,
    });
    ctx
}

/// One encoder input sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInput {
    pub token_ids: Vec<u32>,
    /// 0 for `[CLS] hypothesis [SEP]`, 1 for the contract segment.
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub span_positions: Vec<usize>,
    pub cls_position: usize,
}

impl ModelInput {
    /// Number of non-padding positions (the mask is a prefix of ones).
    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().take_while(|&&m| m == 1).count()
    }

    /// Drop the padding tail.
    pub fn trimmed(mut self) -> Self {
        let len = self.active_len();
        self.token_ids.truncate(len);
        self.segment_ids.truncate(len);
        self.attention_mask.truncate(len);
        self
    }

    /// Build `[CLS] hypothesis [SEP] body [SEP]` with `[SPAN]` markers inserted
    /// into `body` at `markers` (body offsets, before the marked token), then
    /// pad to `pad_to`.
    pub fn build(hypothesis: &[u32], body: &[u32], markers: &[usize], pad_to: usize) -> Result<Self, ContextError> {
        let length = NUM_SPECIALS + hypothesis.len() + body.len() + markers.len();
        if length > pad_to {
            return Err(ContextError::LengthOverflow { length, max: pad_to });
        }
        let mut token_ids = Vec::with_capacity(pad_to);
        token_ids.push(CLS);
        token_ids.extend_from_slice(hypothesis);
        token_ids.push(SEP);
        let first_contract = token_ids.len();
        let mut span_positions = Vec::with_capacity(markers.len());
        let mut next_marker = markers.iter().peekable();
        for (i, &id) in body.iter().enumerate() {
            while next_marker.next_if(|&&m| m == i).is_some() {
                span_positions.push(token_ids.len());
                token_ids.push(SPAN);
            }
            token_ids.push(id);
        }
        token_ids.push(SEP);
        let active = token_ids.len();
        let mut segment_ids = vec![0u8; first_contract];
        segment_ids.resize(active, 1);
        segment_ids.resize(pad_to, 0);
        let mut attention_mask = vec![1u8; active];
        attention_mask.resize(pad_to, 0);
        token_ids.resize(pad_to, PAD);
        Ok(ModelInput {
            token_ids,
            segment_ids,
            attention_mask,
            span_positions,
            cls_position: 0,
        })
    }
}

/// Hypothesis token ids for `mode`.
pub fn hypothesis_ids(hyp: &Hypothesis, vocab: &Vocabulary, mode: HypothesisMode) -> Result<Vec<u32>, ContextError> {
    match mode {
        HypothesisMode::Text => {
            let ids: Vec<u32> = vocab.tokenize(&hyp.text).iter().map(|t| t.id).collect();
            if ids.is_empty() {
                return Err(ContextError::EmptyHypothesis(hyp.id));
            }
            Ok(ids)
        }
        HypothesisMode::Symbol => vocab
            .hypothesis_symbol(hyp.id)
            .map(|id| vec![id])
            .ok_or(ContextError::MissingSymbol(hyp.id)),
    }
}

/// Assemble the model input for `ctx` of `doc`, padded to `max_sequence_length`.
pub fn assemble(
    ctx: &Context,
    doc: &TokenizedDocument,
    hypothesis: &[u32],
    max_sequence_length: usize,
) -> Result<ModelInput, ContextError> {
    let (start, end) = ctx.token_range;
    let body: Vec<u32> = doc.tokens[start..end].iter().map(|t| t.id).collect();
    let markers: Vec<usize> = ctx.span_token_starts.iter().map(|s| s - start).collect();
    ModelInput::build(hypothesis, &body, &markers, max_sequence_length)
}
