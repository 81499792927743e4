//! Corpus-level glue: tokenization, model prediction and aggregation into
//! prediction dumps.

use rayon::prelude::*;
use thiserror::Error;

use crate::aggregate::{aggregate_document, AggregateError, ContextOutput, NliAggregation, PredictionRecord};
use crate::baselines::{SquadExample, SquadModel};
use crate::context::{hypothesis_ids, ContextError, HypothesisMode};
use crate::corpus::{Corpus, NliLabel};
use crate::model::{oracle_example, Model, ModelError, OracleExample};
use crate::segmentation::{SegmentationError, TokenizedDocument, VocabBuilder, Vocabulary};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

/// Learn a vocabulary from every document and hypothesis text.
pub fn fit_vocabulary(corpus: &Corpus, builder: &VocabBuilder) -> Vocabulary {
    let texts = corpus
        .documents
        .iter()
        .map(|d| d.text.as_str())
        .chain(corpus.hypotheses.iter().map(|h| h.text.as_str()));
    builder.build(texts, corpus.hypotheses.len())
}

/// Tokenize every document, in corpus order.
pub fn tokenize_corpus(corpus: &Corpus, vocab: &Vocabulary) -> Result<Vec<TokenizedDocument>, SegmentationError> {
    corpus
        .documents
        .par_iter()
        .map(|d| TokenizedDocument::from_document(d, vocab))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub hypothesis_mode: HypothesisMode,
    pub min_surrounding_tokens: usize,
    pub aggregation: NliAggregation,
}

fn all_hypothesis_ids(
    corpus: &Corpus,
    vocab: &Vocabulary,
    mode: HypothesisMode,
) -> Result<Vec<(u32, Vec<u32>)>, ContextError> {
    corpus
        .hypotheses
        .iter()
        .map(|h| Ok((h.id, hypothesis_ids(h, vocab, mode)?)))
        .collect()
}

/// One record per (document, hypothesis), documents in corpus order and
/// hypotheses in id order.
pub fn predict_corpus(
    model: &Model,
    corpus: &Corpus,
    docs: &[TokenizedDocument],
    vocab: &Vocabulary,
    opts: &PredictOptions,
) -> Result<Vec<PredictionRecord>, PipelineError> {
    let hyps = all_hypothesis_ids(corpus, vocab, opts.hypothesis_mode)?;
    let mut records = Vec::with_capacity(docs.len() * hyps.len());
    for tokenized in docs {
        for (hyp_id, ids) in &hyps {
            let scored = model.predict_document(tokenized, ids, opts.min_surrounding_tokens)?;
            let outputs: Vec<ContextOutput> = scored.iter().map(ContextOutput::from).collect();
            let prediction =
                aggregate_document(&tokenized.doc_id, *hyp_id, &outputs, &tokenized.span_ids, opts.aggregation)?;
            records.push(PredictionRecord::from(&prediction));
        }
    }
    Ok(records)
}

/// Oracle-evidence examples for every Entailment/Contradiction pair.
pub fn oracle_examples(
    corpus: &Corpus,
    docs: &[TokenizedDocument],
    vocab: &Vocabulary,
    mode: HypothesisMode,
    max_sequence_length: usize,
) -> Result<Vec<OracleExample>, PipelineError> {
    let hyps = all_hypothesis_ids(corpus, vocab, mode)?;
    let mut examples = Vec::new();
    for (doc, tokenized) in corpus.documents.iter().zip(docs) {
        for (hyp_id, ids) in &hyps {
            let Some(ann) = doc.annotation(*hyp_id) else { continue };
            examples.extend(oracle_example(tokenized, *hyp_id, ann, ids, max_sequence_length)?);
        }
    }
    Ok(examples)
}

/// Extractive-baseline training windows for every annotated pair.
pub fn squad_examples(
    model: &SquadModel,
    corpus: &Corpus,
    docs: &[TokenizedDocument],
    vocab: &Vocabulary,
    mode: HypothesisMode,
) -> Result<Vec<SquadExample>, PipelineError> {
    let hyps = all_hypothesis_ids(corpus, vocab, mode)?;
    let mut examples = Vec::new();
    for (doc, tokenized) in corpus.documents.iter().zip(docs) {
        for (hyp_id, ids) in &hyps {
            let Some(ann) = doc.annotation(*hyp_id) else { continue };
            examples.extend(model.examples(tokenized, ann, ids)?);
        }
    }
    Ok(examples)
}

/// NLI from gold evidence for Entailment/Contradiction pairs. The record
/// carries `[pE, pC, 0]` and no spans.
pub fn predict_oracle(
    model: &Model,
    corpus: &Corpus,
    docs: &[TokenizedDocument],
    vocab: &Vocabulary,
    mode: HypothesisMode,
) -> Result<Vec<PredictionRecord>, PipelineError> {
    let hyps = all_hypothesis_ids(corpus, vocab, mode)?;
    let max_seq = model.config.encoder.max_positions;
    let mut records = Vec::new();
    for (doc, tokenized) in corpus.documents.iter().zip(docs) {
        for (hyp_id, ids) in &hyps {
            let Some(ann) = doc.annotation(*hyp_id) else { continue };
            let Some(example) = oracle_example(tokenized, *hyp_id, ann, ids, max_seq)? else {
                continue;
            };
            let p = model.forward(&example.input)?.nli_probs;
            records.push(PredictionRecord {
                doc_id: doc.doc_id.clone(),
                hypothesis_id: *hyp_id,
                nli: Some([p[0], p[1], 0.0]),
                spans: Vec::new(),
            });
        }
    }
    Ok(records)
}

/// Span rankings from the extractive baseline for every pair with evidence.
pub fn predict_squad(
    model: &SquadModel,
    corpus: &Corpus,
    docs: &[TokenizedDocument],
    vocab: &Vocabulary,
    mode: HypothesisMode,
) -> Result<Vec<PredictionRecord>, PipelineError> {
    let hyps = all_hypothesis_ids(corpus, vocab, mode)?;
    let mut records = Vec::new();
    for (doc, tokenized) in corpus.documents.iter().zip(docs) {
        for (hyp_id, ids) in &hyps {
            if doc.annotation(*hyp_id).is_some_and(|a| a.label == NliLabel::NotMentioned) {
                continue;
            }
            let spans = model.score_spans(tokenized, ids)?;
            records.push(PredictionRecord {
                doc_id: doc.doc_id.clone(),
                hypothesis_id: *hyp_id,
                nli: None,
                spans,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncoderConfig, ModelConfig};
    use crate::synthetic;

    fn small_model(vocab: &Vocabulary) -> Model {
        let encoder = EncoderConfig {
            vocab_size: vocab.len(),
            hidden_dim: 8,
            num_layers: 1,
            num_heads: 2,
            ffn_dim: 16,
            max_positions: 64,
            dropout: 0.0,
        };
        Model::new(ModelConfig { encoder, nli_classes: 3 }, 1).unwrap()
    }

    #[test]
    fn one_record_per_pair_with_every_span() {
        let corpus = synthetic::generate(3, 0);
        let vocab = fit_vocabulary(&corpus, &VocabBuilder { target_size: 300, min_pair_frequency: 2 });
        let docs = tokenize_corpus(&corpus, &vocab).unwrap();
        let model = small_model(&vocab);
        let opts = PredictOptions {
            hypothesis_mode: HypothesisMode::Symbol,
            min_surrounding_tokens: 8,
            aggregation: NliAggregation::Weighted,
        };
        let records = predict_corpus(&model, &corpus, &docs, &vocab, &opts).unwrap();
        assert_eq!(records.len(), 9);
        for (r, doc) in records.iter().zip(corpus.documents.iter().flat_map(|d| [d, d, d])) {
            assert_eq!(r.doc_id, doc.doc_id);
            assert_eq!(r.spans.len(), doc.spans.len());
            let total: f64 = r.nli.unwrap().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        assert_eq!(records, predict_corpus(&model, &corpus, &docs, &vocab, &opts).unwrap());
    }
}
