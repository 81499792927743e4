//! Extractive start/end baseline over fixed, overlapping windows.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::context::{ModelInput, NUM_SPECIALS};
use crate::corpus::{Annotation, NliLabel};
use crate::model::{
    encode, encode_backward, softmax, zeros_like, BatchLoss, Encoder, EncoderConfig, LossTrace, ModelError,
    TensorRef, Tensors, TrainConfig,
};
use crate::model::{run_training, Linear};
use crate::segmentation::TokenizedDocument;

pub const DEFAULT_STRIDE: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct SquadParams {
    pub encoder: Encoder,
    /// Per-token start and end logits.
    pub qa: Linear,
}

impl Tensors for SquadParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        let p = |name: &str| if prefix.is_empty() { name.to_string() } else { format!("{prefix}.{name}") };
        self.encoder.visit(&p("encoder"), out);
        self.qa.visit(&p("qa"), out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.encoder.visit_mut(out);
        self.qa.visit_mut(out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquadModel {
    pub config: EncoderConfig,
    pub params: SquadParams,
    pub stride: usize,
}

/// Input window with start/end targets (0 points at `[CLS]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SquadExample {
    pub input: ModelInput,
    pub start: usize,
    pub end: usize,
}

/// Token ranges of windows of `window` tokens whose starts advance by
/// `stride` until the document end is reached.
pub fn windows(num_tokens: usize, window: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window).min(num_tokens);
        out.push((start, end));
        if end >= num_tokens {
            return out;
        }
        start += stride.min(end - start).max(1);
    }
}

impl SquadModel {
    pub fn new(config: EncoderConfig, stride: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(&config, &mut rng);
        let qa = Linear::new(config.hidden_dim, 2, &mut rng);
        Ok(SquadModel {
            config,
            params: SquadParams { encoder, qa },
            stride,
        })
    }

    fn window_len(&self, hypothesis_len: usize) -> Result<usize, ModelError> {
        let max = self.config.max_positions;
        match max.checked_sub(hypothesis_len + NUM_SPECIALS) {
            Some(w) if w > 0 => Ok(w),
            _ => Err(ModelError::TooLong {
                length: hypothesis_len + NUM_SPECIALS + 1,
                max,
            }),
        }
    }

    fn window_inputs(
        &self,
        doc: &TokenizedDocument,
        hypothesis: &[u32],
    ) -> Result<Vec<((usize, usize), ModelInput)>, ModelError> {
        let w = self.window_len(hypothesis.len())?;
        windows(doc.num_tokens(), w, self.stride)
            .into_iter()
            .map(|(s, e)| {
                let body: Vec<u32> = doc.tokens[s..e].iter().map(|t| t.id).collect();
                let input = ModelInput::build(hypothesis, &body, &[], self.config.max_positions)?.trimmed();
                Ok(((s, e), input))
            })
            .collect()
    }

    /// Training windows for one (document, hypothesis) pair: for every
    /// evidence span, every window, pointing at the span when it lies inside
    /// the window and at `[CLS]` otherwise. NotMentioned pairs give one
    /// `[CLS]` example per window.
    pub fn examples(
        &self,
        doc: &TokenizedDocument,
        ann: &Annotation,
        hypothesis: &[u32],
    ) -> Result<Vec<SquadExample>, ModelError> {
        let windows = self.window_inputs(doc, hypothesis)?;
        let offset = hypothesis.len() + 2;
        let spans: Vec<(usize, usize)> = if ann.label == NliLabel::NotMentioned {
            Vec::new()
        } else {
            (0..doc.num_spans())
                .filter(|&k| ann.is_evidence(doc.span_ids[k]))
                .map(|k| doc.span_range(k))
                .collect()
        };
        let mut out = Vec::new();
        if spans.is_empty() {
            for (_, input) in windows {
                out.push(SquadExample { input, start: 0, end: 0 });
            }
            return Ok(out);
        }
        for &(s, e) in &spans {
            for ((ws, we), input) in &windows {
                let (start, end) = if s >= *ws && e <= *we {
                    (offset + s - ws, offset + e - 1 - ws)
                } else {
                    (0, 0)
                };
                out.push(SquadExample {
                    input: input.clone(),
                    start,
                    end,
                });
            }
        }
        Ok(out)
    }

    /// Start and end logits per active position.
    pub fn logits(&self, input: &ModelInput) -> Result<Array2<f64>, ModelError> {
        let len = input.active_len();
        let (h, _) = encode::<ChaCha8Rng>(
            &self.params.encoder,
            self.config.num_heads,
            self.config.dropout,
            &input.token_ids[..len],
            &input.segment_ids[..len],
            None,
        )?;
        Ok(self.params.qa.forward(&h))
    }

    /// Span score: mean start logit at the span's first token over the
    /// windows holding that token, plus the mean end logit at its last
    /// token over the windows holding it, halved.
    pub fn score_spans(&self, doc: &TokenizedDocument, hypothesis: &[u32]) -> Result<Vec<(usize, f64)>, ModelError> {
        let offset = hypothesis.len() + 2;
        let mut start_sum = vec![(0.0, 0usize); doc.num_tokens()];
        let mut end_sum = vec![(0.0, 0usize); doc.num_tokens()];
        for ((ws, we), input) in self.window_inputs(doc, hypothesis)? {
            let logits = self.logits(&input)?;
            for t in ws..we {
                let row = offset + t - ws;
                start_sum[t].0 += logits[[row, 0]];
                start_sum[t].1 += 1;
                end_sum[t].0 += logits[[row, 1]];
                end_sum[t].1 += 1;
            }
        }
        Ok((0..doc.num_spans())
            .map(|k| {
                let (s, e) = doc.span_range(k);
                let start = start_sum[s].0 / start_sum[s].1 as f64;
                let end = end_sum[e - 1].0 / end_sum[e - 1].1 as f64;
                (doc.span_ids[k], (start + end) / 2.0)
            })
            .collect())
    }

    /// Mean of the start and end cross-entropies.
    pub fn train(&mut self, examples: &[SquadExample], cfg: &TrainConfig) -> Result<LossTrace, ModelError> {
        cfg.validate()?;
        let config = self.config;
        run_training(&mut self.params, examples.len(), &cfg.optim(), |params, batch, rng| {
            let mut grads = zeros_like(params);
            let mut loss = BatchLoss::default();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &examples[i];
                let len = ex.input.active_len();
                let (h, cache) = encode(
                    &params.encoder,
                    config.num_heads,
                    config.dropout,
                    &ex.input.token_ids[..len],
                    &ex.input.segment_ids[..len],
                    Some(&mut *rng),
                )?;
                let logits = params.qa.forward(&h);
                let mut dlogits = Array2::zeros((len, 2));
                let mut value = 0.0;
                for (col, target) in [(0, ex.start), (1, ex.end)] {
                    let p = softmax(&logits.column(col).to_vec());
                    value += -p[target].max(crate::model::PROB_CLAMP).ln() / 2.0;
                    for (t, pt) in p.iter().enumerate() {
                        dlogits[[t, col]] = scale * 0.5 * (pt - if t == target { 1.0 } else { 0.0 });
                    }
                }
                let dh = params.qa.backward(&h, &dlogits, &mut grads.qa);
                encode_backward(&params.encoder, &cache, config.num_heads, dh, &mut grads.encoder);
                loss.span += scale * value;
                loss.total += scale * value;
            }
            Ok((loss, grads))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_layout() {
        assert_eq!(windows(5, 10, 4), vec![(0, 5)]);
        assert_eq!(windows(10, 4, 3), vec![(0, 4), (3, 7), (6, 10)]);
        assert_eq!(windows(0, 4, 3), vec![(0, 0)]);
    }

    fn config() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 16,
            hidden_dim: 16,
            num_layers: 1,
            num_heads: 2,
            ffn_dim: 32,
            max_positions: 12,
            dropout: 0.0,
        }
    }

    #[test]
    fn targets_point_at_span_or_cls() {
        let model = SquadModel::new(config(), 4, 0).unwrap();
        let doc = TokenizedDocument::synthetic("d", &[3, 3, 3, 3]);
        let ann = Annotation {
            label: NliLabel::Entailment,
            evidence: vec![2],
        };
        // window = 12 - 1 - 3 = 8 contract tokens, starts 0 and 4.
        let ex = model.examples(&doc, &ann, &[7]).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!((ex[0].start, ex[0].end), (0, 0));
        assert_eq!((ex[1].start, ex[1].end), (3 + 2, 3 + 4));
        let nm = model.examples(&doc, &Annotation::not_mentioned(), &[7]).unwrap();
        assert!(nm.iter().all(|e| e.start == 0 && e.end == 0));
    }

    #[test]
    fn single_window_scores_use_that_window() {
        let model = SquadModel::new(config(), 4, 1).unwrap();
        let doc = TokenizedDocument::synthetic("d", &[2, 3]);
        let scores = model.score_spans(&doc, &[7]).unwrap();
        let input = ModelInput::build(&[7], &doc.token_ids(), &[], 12).unwrap();
        let logits = model.logits(&input).unwrap();
        assert!((scores[1].1 - (logits[[3 + 2, 0]] + logits[[3 + 4, 1]]) / 2.0).abs() < 1e-12);
    }
}
