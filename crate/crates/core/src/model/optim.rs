//! AdamW with linear warmup/decay, global-norm clipping and the shared
//! minibatch loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{zeros_like, Tensors};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

/// Linear warmup to `base` over `warmup` steps, then linear decay to 0 at
/// `total`. `step` counts from 0.
pub fn learning_rate_at(step: usize, warmup: usize, total: usize, base: f64) -> f64 {
    let s = step as f64 + 1.0;
    if step < warmup {
        base * s / warmup as f64
    } else if total <= warmup {
        base
    } else {
        base * ((total as f64 - step as f64) / (total - warmup) as f64).max(0.0)
    }
}

/// Scale `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Tensors>(grads: &mut T, max_norm: f64) -> f64 {
    let mut tensors = grads.tensors_mut();
    let norm = tensors
        .iter()
        .flat_map(|t| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && max_norm > 0.0 {
        let scale = max_norm / (norm + 1e-6);
        for t in tensors.iter_mut() {
            t.iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

/// Adam with decoupled weight decay. Biases and normalization parameters
/// are not decayed.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    m: T,
    v: T,
    decay: Vec<bool>,
    step: i32,
}

impl<T: Tensors + Clone> AdamW<T> {
    pub fn new(params: &T, epsilon: f64, weight_decay: f64) -> Self {
        let decay = params
            .named_tensors()
            .iter()
            .map(|(name, _)| !(name.ends_with("bias") || name.ends_with("gamma") || name.ends_with("beta")))
            .collect();
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            epsilon,
            weight_decay,
            m: zeros_like(params),
            v: zeros_like(params),
            decay,
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut T, grads: &T, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let grads = grads.named_tensors();
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
            .zip(&self.decay);
        for ((((p, m), v), (_, g)), &decay) in tensors {
            let wd = if decay { self.weight_decay } else { 0.0 };
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                p[i] -= lr * (update + wd * p[i]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub span: f64,
    pub nli: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,step,loss_span,loss_nli,loss\n");
        for r in &self.records {
            writeln!(out, "{},{},{},{},{}", r.epoch, r.step, r.span, r.nli, r.total).expect("string write");
        }
        out
    }

    /// Mean total loss per epoch.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in &self.records {
            if sums.len() <= r.epoch {
                sums.resize(r.epoch + 1, (0.0, 0));
            }
            sums[r.epoch].0 += r.total;
            sums[r.epoch].1 += 1;
        }
        sums.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.total)
    }
}

/// Mean losses of one minibatch, as returned by a step function.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchLoss {
    pub span: f64,
    pub nli: f64,
    pub total: f64,
}

/// Shuffled minibatch loop shared by every trainer in the crate.
///
/// `step_fn(params, batch, rng)` returns the batch's mean losses and mean
/// gradients. Shuffling and dropout draw from separate ChaCha8 streams of
/// `cfg.seed`.
pub(crate) fn run_training<T, F>(
    params: &mut T,
    num_examples: usize,
    cfg: &OptimConfig,
    mut step_fn: F,
) -> Result<LossTrace, ModelError>
where
    T: Tensors + Clone,
    F: FnMut(&T, &[usize], &mut ChaCha8Rng) -> Result<(BatchLoss, T), ModelError>,
{
    if num_examples == 0 {
        return Err(ModelError::NoExamples);
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::InvalidConfig("batch_size must be positive".into()));
    }
    let steps_per_epoch = num_examples.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);
    let mut optimizer = AdamW::new(params, cfg.adam_epsilon, cfg.weight_decay);
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..num_examples).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, mut grads) = step_fn(params, batch, &mut dropout_rng)?;
            if !loss.total.is_finite() || !grads.is_finite() {
                return Err(ModelError::Divergence {
                    epoch,
                    step,
                    loss: loss.total,
                });
            }
            clip_global_norm(&mut grads, cfg.max_grad_norm);
            let lr = learning_rate_at(step, cfg.warmup_steps, total_steps, cfg.learning_rate);
            optimizer.update(params, &grads, lr);
            trace.records.push(LossRecord {
                epoch,
                step,
                span: loss.span,
                nli: loss.nli,
                total: loss.total,
            });
            step += 1;
        }
        log::debug!("epoch {epoch}: mean loss {:.5}", trace.epoch_means()[epoch]);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Linear;
    use ndarray::array;

    #[test]
    fn schedule_warms_up_then_decays() {
        assert_eq!(learning_rate_at(0, 4, 10, 1.0), 0.25);
        assert_eq!(learning_rate_at(3, 4, 10, 1.0), 1.0);
        assert_eq!(learning_rate_at(4, 4, 10, 1.0), 1.0);
        assert!((learning_rate_at(7, 4, 10, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(learning_rate_at(5, 0, 5, 2.0), 0.0);
        assert_eq!(learning_rate_at(0, 0, 5, 2.0), 2.0);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g = Linear {
            weight: array![[3.0, 0.0]],
            bias: array![4.0, 0.0],
        };
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        let norm: f64 = g.named_tensors().iter().flat_map(|(_, t)| t.iter()).map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(clip_global_norm(&mut g, 10.0), norm);
    }

    #[test]
    fn adamw_first_step_moves_by_learning_rate() {
        let mut p = Linear {
            weight: array![[1.0]],
            bias: array![1.0],
        };
        let g = Linear {
            weight: array![[0.5]],
            bias: array![-2.0],
        };
        let mut opt = AdamW::new(&p, 1e-8, 0.1);
        opt.update(&mut p, &g, 0.01);
        // weight: -lr * (1 + wd * 1); bias: +lr, no decay.
        assert!((p.weight[[0, 0]] - (1.0 - 0.01 * 1.1)).abs() < 1e-7);
        assert!((p.bias[0] - 1.01).abs() < 1e-7);
    }

    #[test]
    fn training_loop_minimizes_a_quadratic() {
        let mut p = Linear {
            weight: array![[3.0]],
            bias: array![-2.0],
        };
        let cfg = OptimConfig {
            learning_rate: 0.1,
            batch_size: 2,
            epochs: 200,
            warmup_steps: 5,
            weight_decay: 0.0,
            max_grad_norm: 1.0,
            adam_epsilon: 1e-8,
            seed: 0,
        };
        let trace = run_training(&mut p, 3, &cfg, |p: &Linear, batch, _| {
            let mut g = zeros_like(p);
            g.weight[[0, 0]] = 2.0 * p.weight[[0, 0]];
            g.bias[0] = 2.0 * p.bias[0];
            let total = p.weight[[0, 0]].powi(2) + p.bias[0].powi(2);
            assert!(!batch.is_empty());
            Ok((BatchLoss { total, ..Default::default() }, g))
        })
        .unwrap();
        assert_eq!(trace.records.len(), 400);
        assert!(trace.final_loss().unwrap() < 1e-2);
        assert!(trace.to_csv().starts_with("epoch,step,loss_span,loss_nli,loss\n0,0,"));
    }

    #[test]
    fn non_finite_loss_is_divergence() {
        let mut p = Linear {
            weight: array![[1.0]],
            bias: array![0.0],
        };
        let cfg = OptimConfig {
            learning_rate: 0.1,
            batch_size: 1,
            epochs: 1,
            warmup_steps: 0,
            weight_decay: 0.0,
            max_grad_norm: 1.0,
            adam_epsilon: 1e-8,
            seed: 0,
        };
        let err = run_training(&mut p, 1, &cfg, |p: &Linear, _, _| {
            Ok((
                BatchLoss {
                    total: f64::NAN,
                    ..Default::default()
                },
                zeros_like(p),
            ))
        })
        .unwrap_err();
        assert!(matches!(err, ModelError::Divergence { .. }));
    }
}
