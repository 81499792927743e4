//! Reference systems: majority vote, TF-IDF with cosine or linear SVMs, an
//! extractive start/end model and random scores. All of them emit
//! [`PredictionRecord`]s.

mod linear;
mod squad;
mod tfidf;

use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::PredictionRecord;
use crate::corpus::{Corpus, Document, NliLabel};

pub use linear::{BinarySvm, OneVsRest, SvmConfig};
pub use squad::{windows, SquadExample, SquadModel, SquadParams, DEFAULT_STRIDE};
pub use tfidf::{analyze, cosine, dot, SparseVec, TfidfVectorizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Majority,
    DocTfidfSvm,
    SpanTfidfCosine,
    SpanTfidfSvm,
    Squad,
    Random,
}

fn most_frequent(counts: &[usize; 3]) -> NliLabel {
    // Ties resolve to the earlier label: E, then C, then N.
    let mut best = 0;
    for i in 1..3 {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    NliLabel::from_index(best).expect("three labels")
}

fn one_hot(label: NliLabel) -> Option<[f64; 3]> {
    Some(label.one_hot())
}

/// Most frequent training label per hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorityVote {
    pub labels: BTreeMap<u32, NliLabel>,
}

impl MajorityVote {
    pub fn fit(train: &Corpus) -> Self {
        let mut counts: BTreeMap<u32, [usize; 3]> = BTreeMap::new();
        for doc in &train.documents {
            for (&h, ann) in &doc.annotations {
                counts.entry(h).or_default()[ann.label.index()] += 1;
            }
        }
        MajorityVote {
            labels: counts.into_iter().map(|(h, c)| (h, most_frequent(&c))).collect(),
        }
    }

    pub fn predict(&self, corpus: &Corpus) -> Vec<PredictionRecord> {
        pairs(corpus)
            .filter_map(|(doc, h)| {
                let label = *self.labels.get(&h)?;
                Some(PredictionRecord {
                    doc_id: doc.doc_id.clone(),
                    hypothesis_id: h,
                    nli: one_hot(label),
                    spans: Vec::new(),
                })
            })
            .collect()
    }
}

fn pairs(corpus: &Corpus) -> impl Iterator<Item = (&Document, u32)> {
    corpus
        .documents
        .iter()
        .flat_map(|d| d.annotations.keys().map(move |&h| (d, h)))
}

fn span_texts(doc: &Document) -> impl Iterator<Item = &str> {
    (0..doc.spans.len()).map(|k| doc.span_text(k))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DocClassifier {
    Svm(OneVsRest),
    /// Fewer than two training classes: the majority label.
    Constant(NliLabel),
}

/// Three-class document classifier per hypothesis over whole-document TF-IDF.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTfidfSvm {
    pub vectorizer: TfidfVectorizer,
    pub classifiers: BTreeMap<u32, DocClassifier>,
}

impl DocTfidfSvm {
    pub fn fit(train: &Corpus, cfg: &SvmConfig) -> Self {
        let texts: Vec<&str> = train.documents.iter().map(|d| d.text.as_str()).collect();
        let vectorizer = TfidfVectorizer::fit(&texts);
        let features: Vec<SparseVec> = texts.iter().map(|t| vectorizer.transform(t)).collect();
        let majority = MajorityVote::fit(train);
        let classifiers = train
            .hypotheses
            .iter()
            .filter_map(|h| {
                let (xs, ys): (Vec<SparseVec>, Vec<usize>) = train
                    .documents
                    .iter()
                    .zip(&features)
                    .filter_map(|(d, x)| d.annotation(h.id).map(|a| (x.clone(), a.label.index())))
                    .unzip();
                let model = match OneVsRest::fit(&xs, &ys, vectorizer.num_features(), cfg) {
                    Some(m) => DocClassifier::Svm(m),
                    None => {
                        warn!("hypothesis {}: fewer than two classes; using the majority label", h.id);
                        DocClassifier::Constant(*majority.labels.get(&h.id)?)
                    }
                };
                Some((h.id, model))
            })
            .collect();
        DocTfidfSvm {
            vectorizer,
            classifiers,
        }
    }

    pub fn predict_label(&self, doc: &Document, hypothesis_id: u32) -> Option<NliLabel> {
        match self.classifiers.get(&hypothesis_id)? {
            DocClassifier::Constant(l) => Some(*l),
            DocClassifier::Svm(m) => NliLabel::from_index(m.predict(&self.vectorizer.transform(&doc.text))),
        }
    }

    pub fn predict(&self, corpus: &Corpus) -> Vec<PredictionRecord> {
        pairs(corpus)
            .filter_map(|(doc, h)| {
                Some(PredictionRecord {
                    doc_id: doc.doc_id.clone(),
                    hypothesis_id: h,
                    nli: one_hot(self.predict_label(doc, h)?),
                    spans: Vec::new(),
                })
            })
            .collect()
    }
}

/// Cosine similarity between hypothesis and span TF-IDF vectors, with the
/// idf fitted on the training spans.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanTfidfCosine {
    pub vectorizer: TfidfVectorizer,
}

impl SpanTfidfCosine {
    pub fn fit(train: &Corpus) -> Self {
        let spans: Vec<&str> = train.documents.iter().flat_map(span_texts).collect();
        SpanTfidfCosine {
            vectorizer: TfidfVectorizer::fit(&spans),
        }
    }

    pub fn score(&self, hypothesis: &str, doc: &Document) -> Vec<(usize, f64)> {
        let h = self.vectorizer.transform(hypothesis);
        span_texts(doc)
            .enumerate()
            .map(|(k, s)| (k, cosine(&h, &self.vectorizer.transform(s))))
            .collect()
    }

    pub fn predict(&self, corpus: &Corpus) -> Vec<PredictionRecord> {
        pairs(corpus)
            .filter_map(|(doc, h)| {
                let text = &corpus.hypothesis(h)?.text;
                Some(PredictionRecord {
                    doc_id: doc.doc_id.clone(),
                    hypothesis_id: h,
                    nli: None,
                    spans: self.score(text, doc),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpanScorer {
    Svm(BinarySvm),
    /// No positive (or no negative) training span.
    Constant(f64),
}

/// Binary evidence classifier per hypothesis over span TF-IDF; decision
/// values are the ranking scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanTfidfSvm {
    pub vectorizer: TfidfVectorizer,
    pub scorers: BTreeMap<u32, SpanScorer>,
}

impl SpanTfidfSvm {
    pub fn fit(train: &Corpus, cfg: &SvmConfig) -> Self {
        let vectorizer = SpanTfidfCosine::fit(train).vectorizer;
        let features: Vec<Vec<SparseVec>> = train
            .documents
            .iter()
            .map(|d| span_texts(d).map(|s| vectorizer.transform(s)).collect())
            .collect();
        let scorers = train
            .hypotheses
            .iter()
            .map(|h| {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for (doc, spans) in train.documents.iter().zip(&features) {
                    let Some(ann) = doc.annotation(h.id) else { continue };
                    for (k, x) in spans.iter().enumerate() {
                        xs.push(x.clone());
                        ys.push(ann.is_evidence(k));
                    }
                }
                let positives = ys.iter().filter(|&&y| y).count();
                let scorer = if positives == 0 || positives == ys.len() {
                    warn!("hypothesis {}: single-class span labels; constant scores", h.id);
                    SpanScorer::Constant(0.0)
                } else {
                    SpanScorer::Svm(BinarySvm::fit(&xs, &ys, vectorizer.num_features(), cfg))
                };
                (h.id, scorer)
            })
            .collect();
        SpanTfidfSvm { vectorizer, scorers }
    }

    pub fn score(&self, hypothesis_id: u32, doc: &Document) -> Option<Vec<(usize, f64)>> {
        let scorer = self.scorers.get(&hypothesis_id)?;
        Some(
            span_texts(doc)
                .enumerate()
                .map(|(k, s)| {
                    let v = match scorer {
                        SpanScorer::Constant(c) => *c,
                        SpanScorer::Svm(m) => m.decision(&self.vectorizer.transform(s)),
                    };
                    (k, v)
                })
                .collect(),
        )
    }

    pub fn predict(&self, corpus: &Corpus) -> Vec<PredictionRecord> {
        pairs(corpus)
            .filter_map(|(doc, h)| {
                Some(PredictionRecord {
                    doc_id: doc.doc_id.clone(),
                    hypothesis_id: h,
                    nli: None,
                    spans: self.score(h, doc)?,
                })
            })
            .collect()
    }
}

/// FNV-1a, used to derive a stable per-document stream.
fn fnv1a(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Uniform `[0, 1)` score per span, seeded by `seed`, the document id and
/// the hypothesis.
pub fn random_scores(doc_id: &str, hypothesis_id: u32, num_spans: usize, seed: u64) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(doc_id));
    rng.set_stream(u64::from(hypothesis_id));
    (0..num_spans).map(|k| (k, rng.random::<f64>())).collect()
}

pub fn random_predictions(corpus: &Corpus, seed: u64) -> Vec<PredictionRecord> {
    pairs(corpus)
        .map(|(doc, h)| PredictionRecord {
            doc_id: doc.doc_id.clone(),
            hypothesis_id: h,
            nli: None,
            spans: random_scores(&doc.doc_id, h, doc.spans.len(), seed),
        })
        .collect()
}
