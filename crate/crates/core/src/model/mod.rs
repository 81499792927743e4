//! Reference encoder with span and NLI heads, the multi-task loss, training
//! and the controlled-experiment variants.

mod checkpoint;
mod encoder;
mod gradcheck;
mod loss;
mod optim;
mod oracle;
mod params;
mod train;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{assemble, segment_for_sequence, Context, ContextError, ModelInput};
use crate::segmentation::TokenizedDocument;

pub(crate) use encoder::{encode, encode_backward};
pub(crate) use optim::run_training;
pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use gradcheck::{gradient_check, gradient_check_with, sample_indices, GradCheckOptions, GradCheckReport, GradEntry, Scope};
pub use loss::{binary_cross_entropy, cross_entropy, loss_nli, loss_span, loss_total, PROB_CLAMP};
pub use optim::{clip_global_norm, learning_rate_at, AdamW, BatchLoss, LossRecord, LossTrace, OptimConfig};
pub use oracle::{oracle_example, oracle_input, train_oracle, OracleExample};
pub use params::{zeros_like, Encoder, EncoderLayer, LayerNorm, Linear, Mlp, ModelParams, TensorRef, Tensors};
pub use train::{build_examples, train, TrainConfig, TrainingExample};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite activation in {0}")]
    NonFinite(String),
    #[error("sequence of {length} positions exceeds max_positions = {max}")]
    TooLong { length: usize, max: usize },
    #[error("token id {0} outside the embedding table")]
    UnknownToken(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no training examples")]
    NoExamples,
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// d = 64, 2 layers, 4 heads, FFN 128, 512 positions, dropout 0.1.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden_dim: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_dim: 128,
            max_positions: 512,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.vocab_size == 0 || self.hidden_dim == 0 || self.num_heads == 0 || self.ffn_dim == 0 {
            return bad("vocab_size, hidden_dim, num_heads and ffn_dim must be positive".into());
        }
        if self.hidden_dim % self.num_heads != 0 {
            return bad(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.max_positions < 4 {
            return bad(format!("max_positions {} is too small", self.max_positions));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// 3 for E/C/N, 2 for the oracle-evidence E/C task.
    pub nli_classes: usize,
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPrediction {
    /// One probability per `[SPAN]` marker, in marker order.
    pub span_probs: Vec<f64>,
    /// Softmax over the NLI classes (E, C, N).
    pub nli_probs: Vec<f64>,
}

/// A context together with its prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredContext {
    pub context: Context,
    pub prediction: ContextPrediction,
}

pub(crate) struct ForwardCache {
    encoder: encoder::EncoderCache,
    span_x: Array2<f64>,
    span_z: Array2<f64>,
    nli_x: Array2<f64>,
    nli_z: Array2<f64>,
    span_positions: Vec<usize>,
    cls_position: usize,
    len: usize,
}

pub(crate) fn forward_with(
    config: &ModelConfig,
    params: &ModelParams,
    input: &ModelInput,
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<(ContextPrediction, (Vec<f64>, Vec<f64>), ForwardCache), ModelError> {
    let len = input.active_len();
    if input.segment_ids.len() < len {
        return Err(ModelError::ShapeMismatch("segment_ids shorter than the active length".into()));
    }
    if input.span_positions.iter().chain([&input.cls_position]).any(|&p| p >= len) {
        return Err(ModelError::ShapeMismatch("head position outside the active length".into()));
    }
    let enc = &config.encoder;
    let (hidden, encoder_cache) = encoder::encode(
        &params.encoder,
        enc.num_heads,
        enc.dropout,
        &input.token_ids[..len],
        &input.segment_ids[..len],
        rng,
    )?;
    let span_x = hidden.select(Axis(0), &input.span_positions);
    let (span_z, span_logits) = params.span_head.forward(&span_x);
    let nli_x = hidden.select(Axis(0), &[input.cls_position]);
    let (nli_z, nli_logits) = params.nli_head.forward(&nli_x);
    let span_logits: Vec<f64> = span_logits.column(0).to_vec();
    let nli_logits: Vec<f64> = nli_logits.row(0).to_vec();
    if span_logits.iter().chain(&nli_logits).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("heads".into()));
    }
    let prediction = ContextPrediction {
        span_probs: span_logits.iter().map(|&l| sigmoid(l)).collect(),
        nli_probs: softmax(&nli_logits),
    };
    let cache = ForwardCache {
        encoder: encoder_cache,
        span_x,
        span_z,
        nli_x,
        nli_z,
        span_positions: input.span_positions.clone(),
        cls_position: input.cls_position,
        len,
    };
    Ok((prediction, (span_logits, nli_logits), cache))
}

/// Accumulate into `grad` the parameter gradients given the loss gradients
/// with respect to the span and NLI logits.
pub(crate) fn backward_with(
    config: &ModelConfig,
    params: &ModelParams,
    cache: &ForwardCache,
    dspan: &[f64],
    dnli: &[f64],
    grad: &mut ModelParams,
) {
    let d = config.encoder.hidden_dim;
    let mut dhidden = Array2::zeros((cache.len, d));
    if !cache.span_positions.is_empty() {
        let dout = Array2::from_shape_vec((dspan.len(), 1), dspan.to_vec()).expect("span logit shape");
        let dx = params.span_head.backward(&cache.span_x, &cache.span_z, &dout, &mut grad.span_head);
        for (row, &p) in dx.rows().into_iter().zip(&cache.span_positions) {
            let mut target = dhidden.row_mut(p);
            target += &row;
        }
    }
    let dout = Array2::from_shape_vec((1, dnli.len()), dnli.to_vec()).expect("nli logit shape");
    let dx = params.nli_head.backward(&cache.nli_x, &cache.nli_z, &dout, &mut grad.nli_head);
    let mut target = dhidden.row_mut(cache.cls_position);
    target += &dx.row(0);
    encoder::encode_backward(
        &params.encoder,
        &cache.encoder,
        config.encoder.num_heads,
        dhidden,
        &mut grad.encoder,
    );
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Model {
    /// Seeded initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        use rand::SeedableRng;
        config.encoder.validate()?;
        if config.nli_classes < 2 {
            return Err(ModelError::InvalidConfig("nli_classes must be at least 2".into()));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::new(&config.encoder, config.nli_classes, &mut rng);
        Ok(Model { config, params })
    }

    /// Eval-mode forward pass (dropout off).
    pub fn forward(&self, input: &ModelInput) -> Result<ContextPrediction, ModelError> {
        self.forward_cached(input, None).map(|(p, _, _)| p)
    }

    /// Forward pass returning probabilities, logits (span, NLI) and the cache
    /// needed by the backward pass. Dropout is active iff `rng` is given.
    pub(crate) fn forward_cached(
        &self,
        input: &ModelInput,
        rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<(ContextPrediction, (Vec<f64>, Vec<f64>), ForwardCache), ModelError> {
        forward_with(&self.config, &self.params, input, rng)
    }

    /// Eval-mode predictions for every context of a (document, hypothesis)
    /// pair, in document order.
    pub fn predict_document(
        &self,
        doc: &TokenizedDocument,
        hypothesis_ids: &[u32],
        min_surrounding_tokens: usize,
    ) -> Result<Vec<ScoredContext>, ModelError> {
        let max_seq = self.config.encoder.max_positions;
        let contexts = segment_for_sequence(doc, hypothesis_ids.len(), max_seq, min_surrounding_tokens)?;
        contexts
            .into_par_iter()
            .map(|context| {
                let input = assemble(&context, doc, hypothesis_ids, max_seq)?;
                let prediction = self.forward(&input)?;
                Ok(ScoredContext { context, prediction })
            })
            .collect()
    }
}
