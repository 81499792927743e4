//! Binary E/C classification from a hypothesis and its gold evidence.

use log::warn;

use super::loss::{cross_entropy, nli_logit_grad};
use super::optim::{run_training, BatchLoss, LossTrace};
use super::params::zeros_like;
use super::train::TrainConfig;
use super::{backward_with, forward_with, Model, ModelError};
use crate::context::{ModelInput, NUM_SPECIALS};
use crate::corpus::{Annotation, NliLabel};
use crate::segmentation::TokenizedDocument;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleExample {
    pub doc_id: String,
    pub hypothesis_id: u32,
    pub input: ModelInput,
    /// 0 for Entailment, 1 for Contradiction.
    pub label: usize,
}

/// `[CLS] hypothesis [SEP] evidence [SEP]` without span markers. Evidence
/// that does not fit is cut from the tail with a warning.
pub fn oracle_input(hypothesis: &[u32], evidence: &[u32], max_sequence_length: usize) -> Result<ModelInput, ModelError> {
    let room = max_sequence_length.saturating_sub(hypothesis.len() + NUM_SPECIALS);
    let body = if evidence.len() > room {
        warn!("oracle input: evidence truncated from {} to {room} tokens", evidence.len());
        &evidence[..room]
    } else {
        evidence
    };
    Ok(ModelInput::build(hypothesis, body, &[], max_sequence_length)?.trimmed())
}

/// Example for an Entailment/Contradiction pair; `None` for NotMentioned.
pub fn oracle_example(
    doc: &TokenizedDocument,
    hypothesis_id: u32,
    ann: &Annotation,
    hypothesis: &[u32],
    max_sequence_length: usize,
) -> Result<Option<OracleExample>, ModelError> {
    let label = match ann.label {
        NliLabel::Entailment => 0,
        NliLabel::Contradiction => 1,
        NliLabel::NotMentioned => return Ok(None),
    };
    let mut evidence = Vec::new();
    for (k, id) in doc.span_ids.iter().enumerate() {
        if ann.is_evidence(*id) {
            let (s, e) = doc.span_range(k);
            evidence.extend(doc.tokens[s..e].iter().map(|t| t.id));
        }
    }
    Ok(Some(OracleExample {
        doc_id: doc.doc_id.clone(),
        hypothesis_id,
        input: oracle_input(hypothesis, &evidence, max_sequence_length)?,
        label,
    }))
}

/// Train a two-class model (`nli_classes == 2`) with cross-entropy only.
pub fn train_oracle(model: &mut Model, examples: &[OracleExample], cfg: &TrainConfig) -> Result<LossTrace, ModelError> {
    cfg.validate()?;
    if model.config.nli_classes != 2 {
        return Err(ModelError::InvalidConfig("the oracle task needs a 2-class NLI head".into()));
    }
    let config = model.config;
    run_training(&mut model.params, examples.len(), &cfg.optim(), |params, batch, rng| {
        let mut grads = zeros_like(params);
        let mut loss = BatchLoss::default();
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let ex = &examples[i];
            let (pred, _, cache) = forward_with(&config, params, &ex.input, Some(rng))?;
            let nli = cross_entropy(&pred.nli_probs, ex.label);
            let dnli: Vec<f64> = nli_logit_grad(&pred.nli_probs, ex.label).iter().map(|g| g * scale).collect();
            backward_with(&config, params, &cache, &[], &dnli, &mut grads);
            loss.nli += scale * nli;
            loss.total += scale * nli;
        }
        Ok((loss, grads))
    })
}
