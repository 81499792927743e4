//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::loss_total;
use super::params::{ModelParams, Tensors};
use super::train::{batch_gradients, TrainingExample};
use super::{forward_with, Model, ModelError};

/// Which parameters are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    /// Span and NLI head parameters only.
    HeadsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
    pub lambda: f64,
    pub scope: Scope,
    /// Denominator floor of the relative error.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            samples: 200,
            seed: 0,
            lambda: 0.2,
            scope: Scope::All,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradEntry>,
    pub max_rel_error: f64,
}

/// `(tensor position, element)` pairs: a tensor is drawn uniformly, then an
/// element within it, without repeats.
pub fn sample_indices(params: &ModelParams, scope: Scope, samples: usize, seed: u64) -> Vec<(usize, usize)> {
    let tensors: Vec<(usize, usize)> = params
        .named_tensors()
        .iter()
        .enumerate()
        .filter(|(_, (name, _))| scope == Scope::All || name.starts_with("span_head") || name.starts_with("nli_head"))
        .map(|(i, (_, t))| (i, t.len()))
        .collect();
    let available: usize = tensors.iter().map(|(_, n)| n).sum();
    let target = samples.min(available);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(target);
    while out.len() < target {
        let (t, len) = tensors[rng.random_range(0..tensors.len())];
        let pick = (t, rng.random_range(0..len));
        if seen.insert(pick) {
            out.push(pick);
        }
    }
    out
}

fn batch_loss(model: &Model, params: &ModelParams, batch: &[TrainingExample], lambda: f64) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for ex in batch {
        let (pred, _, _) = forward_with(&model.config, params, &ex.input, None)?;
        total += loss_total(&pred, &ex.teacher, lambda)?;
    }
    Ok(total / batch.len() as f64)
}

pub fn gradient_check(
    model: &Model,
    batch: &[TrainingExample],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, ModelError> {
    gradient_check_with(model, batch, opts, |_| {})
}

/// As [`gradient_check`], with `corrupt` applied to the analytic gradients
/// before comparison.
pub fn gradient_check_with(
    model: &Model,
    batch: &[TrainingExample],
    opts: &GradCheckOptions,
    corrupt: impl FnOnce(&mut ModelParams),
) -> Result<GradCheckReport, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::NoExamples);
    }
    let all: Vec<usize> = (0..batch.len()).collect();
    let (_, mut grads) = batch_gradients(&model.config, &model.params, batch, &all, opts.lambda, false, None)?;
    corrupt(&mut grads);
    let analytic: Vec<Vec<f64>> = grads.named_tensors().into_iter().map(|(_, t)| t.to_vec()).collect();
    let names: Vec<String> = model.params.named_tensors().into_iter().map(|(n, _)| n).collect();

    let mut probe = model.params.clone();
    let mut entries = Vec::new();
    for (t, i) in sample_indices(&model.params, opts.scope, opts.samples, opts.seed) {
        let original = probe.tensors_mut()[t][i];
        probe.tensors_mut()[t][i] = original + opts.epsilon;
        let up = batch_loss(model, &probe, batch, opts.lambda)?;
        probe.tensors_mut()[t][i] = original - opts.epsilon;
        let down = batch_loss(model, &probe, batch, opts.lambda)?;
        probe.tensors_mut()[t][i] = original;
        let numeric = (up - down) / (2.0 * opts.epsilon);
        let a = analytic[t][i];
        let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        entries.push(GradEntry {
            tensor: names[t].clone(),
            index: i,
            analytic: a,
            numeric,
            rel_error,
        });
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { entries, max_rel_error })
}
