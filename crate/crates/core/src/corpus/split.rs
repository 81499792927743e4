use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, CorpusError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self> {
        let ratios = SplitRatios { train, dev, test };
        ratios.check()?;
        Ok(ratios)
    }

    fn check(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(CorpusError::InvalidRatios(format!("ratios must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidRatios(format!("ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.dev, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            dev: 0.1,
            test: 0.2,
        }
    }
}

/// Apportion `n` items to `weights` (summing to 1) by the largest-remainder
/// method. Equal remainders go to the smaller weight first, then to the
/// earlier position.
pub fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        if (ra - rb).abs() > 1e-9 {
            rb.total_cmp(&ra)
        } else {
            weights[a].total_cmp(&weights[b]).then(a.cmp(&b))
        }
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Split into (train, dev, test), stratified by document format.
///
/// Formats are processed in name order; within a format, documents are
/// sorted by id, shuffled with a seeded ChaCha8 stream, then cut according to
/// [`largest_remainder`]. Each output keeps the input's document order.
pub fn stratified_split(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    ratios.check()?;
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    let mut by_format: BTreeMap<&'static str, Vec<&str>> = BTreeMap::new();
    for doc in &corpus.documents {
        by_format.entry(doc.format.as_str()).or_default().push(doc.doc_id.as_str());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assigned: [HashSet<&str>; 3] = Default::default();
    for ids in by_format.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let counts = largest_remainder(ids.len(), &ratios.as_array());
        let mut rest = ids.as_slice();
        for (bucket, count) in assigned.iter_mut().zip(counts) {
            let (head, tail) = rest.split_at(count);
            bucket.extend(head.iter().copied());
            rest = tail;
        }
    }

    let part = |bucket: &HashSet<&str>| Corpus {
        hypotheses: corpus.hypotheses.clone(),
        documents: corpus
            .documents
            .iter()
            .filter(|d| bucket.contains(d.doc_id.as_str()))
            .cloned()
            .collect(),
    };
    Ok((part(&assigned[0]), part(&assigned[1]), part(&assigned[2])))
}
