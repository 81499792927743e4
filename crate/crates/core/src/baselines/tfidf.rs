//! Unigram TF-IDF over lowercased alphanumeric words.

use std::collections::BTreeMap;

/// Sparse vector: `(feature, value)` sorted by feature.
pub type SparseVec = Vec<(usize, f64)>;

/// Lowercased alphanumeric runs; punctuation and whitespace separate words.
pub fn analyze(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfVectorizer {
    pub vocabulary: BTreeMap<String, usize>,
    pub document_frequency: Vec<usize>,
    pub num_documents: usize,
    pub idf: Vec<f64>,
    pub smooth_idf: bool,
    pub normalize: bool,
}

impl TfidfVectorizer {
    /// Fit with smoothed idf `ln((1 + N) / (1 + df)) + 1` and L2 rows.
    pub fn fit<S: AsRef<str>>(texts: &[S]) -> Self {
        Self::fit_with(texts, true, true)
    }

    /// Without smoothing the idf is `ln(N / df) + 1`.
    pub fn fit_with<S: AsRef<str>>(texts: &[S], smooth_idf: bool, normalize: bool) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            let mut words = analyze(text.as_ref());
            words.sort_unstable();
            words.dedup();
            for w in words {
                *df.entry(w).or_default() += 1;
            }
        }
        let n = texts.len() as f64;
        let vocabulary: BTreeMap<String, usize> = df.keys().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let document_frequency: Vec<usize> = df.values().copied().collect();
        let idf = document_frequency
            .iter()
            .map(|&d| {
                if smooth_idf {
                    ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0
                } else {
                    (n / d as f64).ln() + 1.0
                }
            })
            .collect();
        TfidfVectorizer {
            vocabulary,
            document_frequency,
            num_documents: texts.len(),
            idf,
            smooth_idf,
            normalize,
        }
    }

    pub fn num_features(&self) -> usize {
        self.vocabulary.len()
    }

    /// Raw counts times idf; words outside the vocabulary are ignored.
    pub fn transform(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for w in analyze(text) {
            if let Some(&i) = self.vocabulary.get(&w) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        if self.normalize {
            let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|(_, x)| *x /= norm);
            }
        }
        v
    }
}

pub fn dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
