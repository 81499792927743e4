//! Multi-task training on mixed-document context minibatches.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{binary_cross_entropy, cross_entropy, nli_logit_grad, span_logit_grad};
use super::optim::{run_training, BatchLoss, LossTrace, OptimConfig};
use super::params::zeros_like;
use super::{backward_with, forward_with, Model, ModelConfig, ModelError, ModelParams};
use crate::context::{align_teacher, assemble, hypothesis_ids, segment_for_sequence, HypothesisMode, ModelInput, Teacher};
use crate::corpus::{Corpus, NliLabel};
use crate::segmentation::{TokenizedDocument, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the NLI loss.
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Weight contexts by mean span probability when aggregating NLI.
    pub use_weighted_nli: bool,
    /// Also apply the NLI loss, with target NotMentioned, to contexts of
    /// NotMentioned pairs. Off by default: only contexts holding evidence
    /// receive NLI supervision.
    pub supervise_not_mentioned: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.2,
            learning_rate: 5e-5,
            batch_size: 32,
            epochs: 3,
            warmup_steps: 1000,
            weight_decay: 0.1,
            max_grad_norm: 1.0,
            adam_epsilon: 1e-8,
            seed: 0,
            use_weighted_nli: true,
            supervise_not_mentioned: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.max_grad_norm > 0.0 && self.adam_epsilon > 0.0) {
            return bad("weight_decay must be >= 0; max_grad_norm and adam_epsilon > 0");
        }
        Ok(())
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            warmup_steps: self.warmup_steps,
            weight_decay: self.weight_decay,
            max_grad_norm: self.max_grad_norm,
            adam_epsilon: self.adam_epsilon,
            seed: self.seed,
        }
    }
}

/// One supervised context.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub doc_id: String,
    pub hypothesis_id: u32,
    pub input: ModelInput,
    pub teacher: Teacher,
}

/// Supervised contexts for every (document, hypothesis) pair, in document,
/// hypothesis, context order. `docs[i]` is the tokenization of
/// `corpus.documents[i]`.
pub fn build_examples(
    corpus: &Corpus,
    docs: &[TokenizedDocument],
    vocab: &Vocabulary,
    mode: HypothesisMode,
    max_sequence_length: usize,
    min_surrounding_tokens: usize,
) -> Result<Vec<TrainingExample>, ModelError> {
    let hyps = corpus
        .hypotheses
        .iter()
        .map(|h| Ok((h.id, hypothesis_ids(h, vocab, mode)?)))
        .collect::<Result<Vec<_>, ModelError>>()?;
    let mut examples = Vec::new();
    for (doc, tokenized) in corpus.documents.iter().zip(docs) {
        for (hyp_id, ids) in &hyps {
            let Some(ann) = doc.annotation(*hyp_id) else {
                continue;
            };
            for ctx in segment_for_sequence(tokenized, ids.len(), max_sequence_length, min_surrounding_tokens)? {
                let input = assemble(&ctx, tokenized, ids, max_sequence_length)?.trimmed();
                let teacher = align_teacher(ctx, ann).teacher.expect("aligned");
                examples.push(TrainingExample {
                    doc_id: doc.doc_id.clone(),
                    hypothesis_id: *hyp_id,
                    input,
                    teacher,
                });
            }
        }
    }
    Ok(examples)
}

pub(crate) fn nli_supervised(teacher: &Teacher, supervise_not_mentioned: bool) -> bool {
    teacher.has_evidence || (supervise_not_mentioned && teacher.nli == NliLabel::NotMentioned)
}

/// Mean losses and gradients of `batch`; dropout is active iff `rng` is given.
pub(crate) fn batch_gradients(
    config: &ModelConfig,
    params: &ModelParams,
    examples: &[TrainingExample],
    batch: &[usize],
    lambda: f64,
    supervise_not_mentioned: bool,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(BatchLoss, ModelParams), ModelError> {
    let mut grads = zeros_like(params);
    let mut loss = BatchLoss::default();
    let scale = 1.0 / batch.len() as f64;
    for &i in batch {
        let ex = &examples[i];
        if ex.teacher.span_labels.len() != ex.input.span_positions.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} span labels for {} [SPAN] markers",
                ex.teacher.span_labels.len(),
                ex.input.span_positions.len()
            )));
        }
        let dropout = rng.as_deref_mut().map(|r| r as &mut dyn rand::RngCore);
        let (pred, _, cache) = forward_with(config, params, &ex.input, dropout)?;
        let span = binary_cross_entropy(&pred.span_probs, &ex.teacher.span_labels)?;
        let dspan: Vec<f64> = pred
            .span_probs
            .iter()
            .zip(&ex.teacher.span_labels)
            .map(|(&p, &s)| scale * span_logit_grad(p, s))
            .collect();
        let target = ex.teacher.nli.index();
        let (nli, dnli) = if nli_supervised(&ex.teacher, supervise_not_mentioned) && target < pred.nli_probs.len() {
            let g = nli_logit_grad(&pred.nli_probs, target);
            (
                cross_entropy(&pred.nli_probs, target),
                g.into_iter().map(|v| scale * lambda * v).collect(),
            )
        } else {
            (0.0, vec![0.0; pred.nli_probs.len()])
        };
        backward_with(config, params, &cache, &dspan, &dnli, &mut grads);
        loss.span += scale * span;
        loss.nli += scale * nli;
        loss.total += scale * (span + lambda * nli);
    }
    Ok((loss, grads))
}

/// Train `model` in place. Deterministic given `cfg.seed`.
pub fn train(model: &mut Model, examples: &[TrainingExample], cfg: &TrainConfig) -> Result<LossTrace, ModelError> {
    cfg.validate()?;
    let config = model.config;
    run_training(&mut model.params, examples.len(), &cfg.optim(), |params, batch, rng| {
        batch_gradients(&config, params, examples, batch, cfg.lambda, cfg.supervise_not_mentioned, Some(rng))
    })
}
