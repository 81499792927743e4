//! Linear SVM: L2-regularized hinge loss solved by dual coordinate descent,
//! with the bias learned as an extra constant feature.

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tfidf::{dot, SparseVec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            tolerance: 1e-3,
            max_iterations: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
}

impl BinarySvm {
    /// Fit on `xs` with labels `ys` (true = positive class).
    pub fn fit(xs: &[SparseVec], ys: &[bool], num_features: usize, cfg: &SvmConfig) -> Self {
        let y: Vec<f64> = ys.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
        let q: Vec<f64> = xs.iter().map(|x| dot(x, x) + 1.0).collect();
        let mut w = vec![0.0; num_features];
        let mut b = 0.0;
        let mut alpha = vec![0.0; xs.len()];
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut converged = false;
        for _ in 0..cfg.max_iterations {
            order.shuffle(&mut rng);
            let mut pg_max = f64::NEG_INFINITY;
            let mut pg_min = f64::INFINITY;
            for &i in &order {
                let margin = xs[i].iter().map(|&(f, v)| w[f] * v).sum::<f64>() + b;
                let g = y[i] * margin - 1.0;
                let pg = if alpha[i] == 0.0 {
                    g.min(0.0)
                } else if alpha[i] == cfg.c {
                    g.max(0.0)
                } else {
                    g
                };
                pg_max = pg_max.max(pg);
                pg_min = pg_min.min(pg);
                if pg.abs() > 1e-12 {
                    let old = alpha[i];
                    alpha[i] = (old - g / q[i]).clamp(0.0, cfg.c);
                    let step = (alpha[i] - old) * y[i];
                    for &(f, v) in &xs[i] {
                        w[f] += step * v;
                    }
                    b += step;
                }
            }
            if pg_max - pg_min <= cfg.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            warn!("linear SVM did not converge in {} iterations", cfg.max_iterations);
        }
        BinarySvm {
            weights: w,
            bias: b,
            converged,
        }
    }

    pub fn decision(&self, x: &[(usize, f64)]) -> f64 {
        x.iter()
            .filter(|(f, _)| *f < self.weights.len())
            .map(|&(f, v)| self.weights[f] * v)
            .sum::<f64>()
            + self.bias
    }
}

/// One binary SVM per class against the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct OneVsRest {
    pub classes: Vec<usize>,
    pub models: Vec<BinarySvm>,
}

impl OneVsRest {
    /// `classes` must hold at least two distinct labels.
    pub fn fit(xs: &[SparseVec], labels: &[usize], num_features: usize, cfg: &SvmConfig) -> Option<Self> {
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return None;
        }
        let models = classes
            .iter()
            .map(|&c| {
                let ys: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                BinarySvm::fit(xs, &ys, num_features, cfg)
            })
            .collect();
        Some(OneVsRest { classes, models })
    }

    /// Class with the largest decision value; ties go to the smaller label.
    pub fn predict(&self, x: &[(usize, f64)]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, m) in self.models.iter().enumerate() {
            let s = m.decision(x);
            if s > best_score {
                best = k;
                best_score = s;
            }
        }
        self.classes[best]
    }
}
