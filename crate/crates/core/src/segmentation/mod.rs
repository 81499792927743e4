//! Raw text to spans, subword tokens and span-boundary token indices.

mod splitter;
mod vocab;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{char_slice, Document, SpanRecord};

pub use splitter::{paragraph_breaks, split_spans, split_text};
pub use vocab::{pre_tokenize, VocabBuilder, Vocabulary, CLS, CONTINUATION, PAD, SEP, SPAN, UNK};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("span {span_id} contains no tokens")]
    EmptySpan { span_id: usize },
    #[error("token {token} [{char_start}, {char_end}) is not inside exactly one span")]
    Straddle {
        token: usize,
        char_start: usize,
        char_end: usize,
    },
    #[error("document `{0}` has no tokens in any span")]
    EmptyDocument(String),
    #[error("vocabulary file: {0}")]
    VocabFormat(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub id: u32,
    pub char_start: usize,
    pub char_end: usize,
}

/// Tokens of a document together with their span layout.
///
/// `span_boundaries` holds the first token index of every span followed by
/// the token count. Spans are the document's spans minus those that tokenized
/// to nothing; `span_ids[k]` is the document span id of the k-th entry and
/// `absorbed` lists `(empty span id, span id it was merged into)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub doc_id: String,
    pub tokens: Vec<Token>,
    pub span_boundaries: Vec<usize>,
    pub span_ids: Vec<usize>,
    pub span_of_token: Vec<usize>,
    pub absorbed: Vec<(usize, usize)>,
}

impl TokenizedDocument {
    pub fn num_spans(&self) -> usize {
        self.span_ids.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Token range `[start, end)` of the k-th indexed span.
    pub fn span_range(&self, k: usize) -> (usize, usize) {
        (self.span_boundaries[k], self.span_boundaries[k + 1])
    }

    pub fn token_ids(&self) -> Vec<u32> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    /// Tokenize `doc` span by span and index the result. Spans that produce
    /// no tokens are merged into their predecessor (or, for a leading span,
    /// into the next span) with a warning.
    pub fn from_document(doc: &Document, vocab: &Vocabulary) -> Result<Self, SegmentationError> {
        let tokens = tokenize_spans(&doc.text, &doc.spans, vocab);
        index_spans_merging(&doc.doc_id, tokens, &doc.spans)
    }

    /// Index-based constructor used by synthetic tests: `span_lengths[k]`
    /// tokens per span, all mapped to [`UNK`].
    pub fn synthetic(doc_id: &str, span_lengths: &[usize]) -> Self {
        let mut tokens = Vec::new();
        let mut spans = Vec::new();
        for &len in span_lengths {
            let start = tokens.len();
            for _ in 0..len {
                let at = tokens.len();
                tokens.push(Token {
                    surface: "[UNK]".into(),
                    id: UNK,
                    char_start: at,
                    char_end: at + 1,
                });
            }
            spans.push(SpanRecord::new(start, tokens.len()));
        }
        index_spans(doc_id, tokens, &spans).expect("synthetic spans are non-empty")
    }
}

/// Tokenize each span separately so that no token crosses a span boundary.
/// Text outside every span is not tokenized.
pub fn tokenize_spans(text: &str, spans: &[SpanRecord], vocab: &Vocabulary) -> Vec<Token> {
    let mut tokens = Vec::new();
    for span in spans {
        let piece = char_slice(text, span.char_start, span.char_end);
        tokens.extend(vocab.tokenize_at(piece, span.char_start));
    }
    tokens
}

/// Locate each span's tokens. Tokens must be ordered and each must lie inside
/// exactly one span; a span without tokens is an error.
pub fn index_spans(
    doc_id: &str,
    tokens: Vec<Token>,
    spans: &[SpanRecord],
) -> Result<TokenizedDocument, SegmentationError> {
    let ranges = span_token_ranges(&tokens, spans)?;
    if let Some(k) = ranges.iter().position(|(s, e)| s == e) {
        return Err(SegmentationError::EmptySpan { span_id: k });
    }
    Ok(assemble(doc_id, tokens, ranges, Vec::new()))
}

/// As [`index_spans`], but empty spans merge backward instead of failing.
pub fn index_spans_merging(
    doc_id: &str,
    tokens: Vec<Token>,
    spans: &[SpanRecord],
) -> Result<TokenizedDocument, SegmentationError> {
    let ranges = span_token_ranges(&tokens, spans)?;
    if tokens.is_empty() {
        return Err(SegmentationError::EmptyDocument(doc_id.to_string()));
    }
    let mut kept: Vec<(usize, usize, usize)> = Vec::new();
    let mut absorbed = Vec::new();
    let mut pending_leading = Vec::new();
    for (k, &(s, e)) in ranges.iter().enumerate() {
        if s < e {
            for lead in pending_leading.drain(..) {
                warn!("{doc_id}: span {lead} has no tokens; merged into span {k}");
                absorbed.push((lead, k));
            }
            kept.push((k, s, e));
        } else if let Some(&(host, _, _)) = kept.last() {
            warn!("{doc_id}: span {k} has no tokens; merged into span {host}");
            absorbed.push((k, host));
        } else {
            pending_leading.push(k);
        }
    }
    let ids = kept.iter().map(|&(k, _, _)| k).collect::<Vec<_>>();
    let doc = assemble(
        doc_id,
        tokens,
        kept.iter().map(|&(_, s, e)| (s, e)).collect(),
        absorbed,
    );
    Ok(TokenizedDocument { span_ids: ids, ..doc })
}

fn span_token_ranges(tokens: &[Token], spans: &[SpanRecord]) -> Result<Vec<(usize, usize)>, SegmentationError> {
    let mut ranges = Vec::with_capacity(spans.len());
    let mut t = 0;
    for span in spans {
        let start = t;
        while t < tokens.len() && tokens[t].char_end <= span.char_end {
            if tokens[t].char_start < span.char_start {
                return Err(straddle(tokens, t));
            }
            t += 1;
        }
        ranges.push((start, t));
    }
    if t < tokens.len() {
        return Err(straddle(tokens, t));
    }
    Ok(ranges)
}

fn straddle(tokens: &[Token], t: usize) -> SegmentationError {
    SegmentationError::Straddle {
        token: t,
        char_start: tokens[t].char_start,
        char_end: tokens[t].char_end,
    }
}

fn assemble(
    doc_id: &str,
    tokens: Vec<Token>,
    ranges: Vec<(usize, usize)>,
    absorbed: Vec<(usize, usize)>,
) -> TokenizedDocument {
    let mut boundaries: Vec<usize> = ranges.iter().map(|&(s, _)| s).collect();
    boundaries.push(tokens.len());
    let mut span_of_token = vec![0; tokens.len()];
    for (k, &(s, e)) in ranges.iter().enumerate() {
        span_of_token[s..e].fill(k);
    }
    TokenizedDocument {
        doc_id: doc_id.to_string(),
        tokens,
        span_boundaries: boundaries,
        span_ids: (0..ranges.len()).collect(),
        span_of_token,
        absorbed,
    }
}
