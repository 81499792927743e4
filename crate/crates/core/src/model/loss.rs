//! Span, NLI and combined losses with their logit gradients.

use super::{ContextPrediction, ModelError};
use crate::context::Teacher;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `Σ_i −s_i log ŝ_i − (1 − s_i) log(1 − ŝ_i)`.
pub fn binary_cross_entropy(probs: &[f64], labels: &[u8]) -> Result<f64, ModelError> {
    if probs.len() != labels.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} span probabilities for {} span labels",
            probs.len(),
            labels.len()
        )));
    }
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, &s)| {
            let p = clamp(p);
            if s == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum())
}

/// `−log ŷ_target`.
pub fn cross_entropy(probs: &[f64], target: usize) -> f64 {
    -clamp(probs[target]).ln()
}

pub fn loss_span(pred: &ContextPrediction, teacher: &Teacher) -> Result<f64, ModelError> {
    binary_cross_entropy(&pred.span_probs, &teacher.span_labels)
}

/// Cross-entropy against the teacher label, or exactly 0 when the context
/// holds no evidence span.
pub fn loss_nli(pred: &ContextPrediction, teacher: &Teacher) -> f64 {
    if teacher.has_evidence {
        cross_entropy(&pred.nli_probs, teacher.nli.index())
    } else {
        0.0
    }
}

pub fn loss_total(pred: &ContextPrediction, teacher: &Teacher, lambda: f64) -> Result<f64, ModelError> {
    Ok(loss_span(pred, teacher)? + lambda * loss_nli(pred, teacher))
}

/// d(BCE)/d(logit) for one span; zero where the clamp is active.
pub(crate) fn span_logit_grad(prob: f64, label: u8) -> f64 {
    if prob <= PROB_CLAMP || prob >= 1.0 - PROB_CLAMP {
        0.0
    } else {
        prob - f64::from(label)
    }
}

/// d(CE)/d(logits); zero where the clamp is active.
pub(crate) fn nli_logit_grad(probs: &[f64], target: usize) -> Vec<f64> {
    if probs[target] <= PROB_CLAMP {
        return vec![0.0; probs.len()];
    }
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| p - if i == target { 1.0 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NliLabel;
    use approx::assert_abs_diff_eq;

    fn pred(span: &[f64], nli: &[f64]) -> ContextPrediction {
        ContextPrediction {
            span_probs: span.to_vec(),
            nli_probs: nli.to_vec(),
        }
    }

    fn teacher(labels: &[u8], nli: NliLabel) -> Teacher {
        Teacher {
            span_labels: labels.to_vec(),
            nli,
            has_evidence: labels.contains(&1),
        }
    }

    #[test]
    fn span_loss_values() {
        let t = teacher(&[1], NliLabel::Entailment);
        assert_abs_diff_eq!(loss_span(&pred(&[0.5], &[1.0, 0.0, 0.0]), &t).unwrap(), 0.6931, epsilon = 1e-4);
        let t = teacher(&[1, 0], NliLabel::Entailment);
        assert_abs_diff_eq!(loss_span(&pred(&[0.9, 0.1], &[1.0, 0.0, 0.0]), &t).unwrap(), 0.2107, epsilon = 1e-4);
        assert!(loss_span(&pred(&[1.0, 0.0], &[1.0, 0.0, 0.0]), &t).unwrap() <= 2e-6);
        assert!(matches!(
            loss_span(&pred(&[0.5], &[1.0, 0.0, 0.0]), &t),
            Err(ModelError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn nli_loss_values_and_mask() {
        let third = [1.0 / 3.0; 3];
        let t = teacher(&[1], NliLabel::Entailment);
        assert_abs_diff_eq!(loss_nli(&pred(&[0.5], &third), &t), 1.0986, epsilon = 1e-4);
        let t = teacher(&[1], NliLabel::Contradiction);
        assert_abs_diff_eq!(loss_nli(&pred(&[0.5], &[0.7, 0.2, 0.1]), &t), 1.6094, epsilon = 1e-4);
        let masked = teacher(&[0, 0], NliLabel::Entailment);
        assert_eq!(loss_nli(&pred(&[0.5, 0.5], &[0.0, 1.0, 0.0]), &masked), 0.0);
    }

    #[test]
    fn total_combines_sub_losses() {
        let t = teacher(&[1, 0], NliLabel::Contradiction);
        let p = pred(&[0.3, 0.6], &[0.2, 0.5, 0.3]);
        assert_eq!(loss_total(&p, &t, 0.0).unwrap(), loss_span(&p, &t).unwrap());
        let expected = loss_span(&p, &t).unwrap() + 0.2 * loss_nli(&p, &t);
        assert_eq!(loss_total(&p, &t, 0.2).unwrap(), expected);
        // 1.0 + 0.2 * 2.0
        assert_abs_diff_eq!(1.0 + 0.2 * 2.0, 1.4, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let logit = 0.4_f64;
        let h = 1e-6;
        for label in [0u8, 1] {
            let f = |z: f64| binary_cross_entropy(&[super::super::sigmoid(z)], &[label]).unwrap();
            let numeric = (f(logit + h) - f(logit - h)) / (2.0 * h);
            assert_abs_diff_eq!(numeric, span_logit_grad(super::super::sigmoid(logit), label), epsilon = 1e-8);
        }
        let logits = [0.3, -1.2, 0.8];
        let analytic = nli_logit_grad(&super::super::softmax(&logits), 1);
        for i in 0..3 {
            let mut up = logits;
            let mut down = logits;
            up[i] += h;
            down[i] -= h;
            let numeric = (cross_entropy(&super::super::softmax(&up), 1)
                - cross_entropy(&super::super::softmax(&down), 1))
                / (2.0 * h);
            assert_abs_diff_eq!(numeric, analytic[i], epsilon = 1e-8);
        }
    }
}
