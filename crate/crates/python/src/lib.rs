//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists (through JSON), so the Python side needs no extra classes for them.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use docnli::aggregate::{aggregate_nli, aggregate_spans, ContextOutput, NliAggregation, PredictionRecord};
use docnli::baselines::{
    random_predictions, BaselineKind, DocTfidfSvm, MajorityVote, SpanTfidfCosine, SpanTfidfSvm, SvmConfig,
};
use docnli::cli::ExperimentConfig;
use docnli::context::{hypothesis_ids, segment_for_sequence};
use docnli::corpus::{self, SplitRatios};
use docnli::metrics::{self, EvalOptions, UndefinedF1};
use docnli::model::{self as core_model, build_examples};
use docnli::pipeline::{self, PredictOptions};
use docnli::segmentation::{self, TokenizedDocument, VocabBuilder};
use docnli::synthetic;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = obj.py().import("json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn parse_config(config: Option<&str>) -> PyResult<ExperimentConfig> {
    let config: ExperimentConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => ExperimentConfig::default(),
    };
    config.validate().map_err(value_err)?;
    Ok(config)
}

/// Documents, hypotheses and gold annotations.
#[pyclass(module = "docnli_py", frozen)]
struct Corpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        corpus::load_corpus(path).map(|inner| Corpus { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        corpus::parse_corpus(text).map(|inner| Corpus { inner }).map_err(value_err)
    }

    /// Read a file in the released dataset format.
    #[staticmethod]
    fn import_release(path: PathBuf) -> PyResult<Self> {
        corpus::import_contractnli(path).map(|inner| Corpus { inner }).map_err(value_err)
    }

    #[staticmethod]
    #[pyo3(signature = (documents=synthetic::BUNDLED_DOCUMENTS, seed=synthetic::BUNDLED_SEED))]
    fn synthetic(documents: usize, seed: u64) -> Self {
        Corpus {
            inner: synthetic::generate(documents, seed),
        }
    }

    fn to_json(&self) -> String {
        corpus::to_canonical_json(&self.inner)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        corpus::save_corpus(&self.inner, path).map_err(runtime_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn doc_ids(&self) -> Vec<String> {
        self.inner.documents.iter().map(|d| d.doc_id.clone()).collect()
    }

    fn hypotheses<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.hypotheses)
    }

    fn document<'py>(&self, py: Python<'py>, doc_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let doc = self
            .inner
            .document(doc_id)
            .ok_or_else(|| value_err(format!("no document `{doc_id}`")))?;
        to_py(py, doc)
    }

    /// Train/dev/test split, stratified by document format.
    #[pyo3(signature = (seed=0, train=0.7, dev=0.1, test=0.2))]
    fn split(&self, seed: u64, train: f64, dev: f64, test: f64) -> PyResult<(Corpus, Corpus, Corpus)> {
        let ratios = SplitRatios::new(train, dev, test).map_err(value_err)?;
        let (a, b, c) = corpus::stratified_split(&self.inner, ratios, seed).map_err(value_err)?;
        Ok((Corpus { inner: a }, Corpus { inner: b }, Corpus { inner: c }))
    }
}

#[pyclass(module = "docnli_py", frozen)]
struct Vocabulary {
    inner: segmentation::Vocabulary,
}

#[pymethods]
impl Vocabulary {
    /// Learn subwords from every document and hypothesis of `corpus`.
    #[staticmethod]
    #[pyo3(signature = (corpus, target_size=VocabBuilder::default().target_size, min_pair_frequency=2))]
    fn build(corpus: &Corpus, target_size: usize, min_pair_frequency: u64) -> Self {
        let builder = VocabBuilder {
            target_size,
            min_pair_frequency,
        };
        Vocabulary {
            inner: pipeline::fit_vocabulary(&corpus.inner, &builder),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        segmentation::Vocabulary::load(path)
            .map(|inner| Vocabulary { inner })
            .map_err(value_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(runtime_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn piece(&self, id: u32) -> Option<String> {
        self.inner.piece(id).map(str::to_string)
    }

    /// `(id, char_start, char_end)` per subword.
    fn tokenize(&self, text: &str) -> Vec<(u32, usize, usize)> {
        self.inner
            .tokenize(text)
            .into_iter()
            .map(|t| (t.id, t.char_start, t.char_end))
            .collect()
    }
}

#[pyclass(module = "docnli_py", frozen)]
struct Model {
    inner: core_model::Model,
    config: ExperimentConfig,
}

#[pymethods]
impl Model {
    /// Train on `corpus`; `config` is an experiment config as JSON. Returns the
    /// model and the total loss after every step.
    #[staticmethod]
    #[pyo3(signature = (corpus, vocab, config=None))]
    fn train(py: Python<'_>, corpus: &Corpus, vocab: &Vocabulary, config: Option<&str>) -> PyResult<(Model, Vec<f64>)> {
        let config = parse_config(config)?;
        let (corpus, vocab) = (&corpus.inner, &vocab.inner);
        let (model, trace) = py
            .detach(|| -> Result<_, String> {
                let docs = pipeline::tokenize_corpus(corpus, vocab).map_err(|e| e.to_string())?;
                let mut model = core_model::Model::new(config.model_config(vocab.len()), config.train.seed)
                    .map_err(|e| e.to_string())?;
                let max_seq = config.segmentation.max_sequence_length;
                let trace = if config.oracle_nli {
                    let examples = pipeline::oracle_examples(corpus, &docs, vocab, config.hypothesis_mode, max_seq)
                        .map_err(|e| e.to_string())?;
                    core_model::train_oracle(&mut model, &examples, &config.train)
                } else {
                    let examples = build_examples(
                        corpus,
                        &docs,
                        vocab,
                        config.hypothesis_mode,
                        max_seq,
                        config.segmentation.min_surrounding_tokens,
                    )
                    .map_err(|e| e.to_string())?;
                    core_model::train(&mut model, &examples, &config.train)
                }
                .map_err(|e| e.to_string())?;
                Ok((model, trace))
            })
            .map_err(runtime_err)?;
        let losses = trace.records.iter().map(|r| r.total).collect();
        Ok((Model { inner: model, config }, losses))
    }

    #[staticmethod]
    #[pyo3(signature = (path, config=None))]
    fn load(path: PathBuf, config: Option<&str>) -> PyResult<Self> {
        let config = parse_config(config)?;
        let inner = core_model::load_checkpoint(&path).map_err(value_err)?;
        Ok(Model { inner, config })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core_model::save_checkpoint(&self.inner, &path).map_err(runtime_err)
    }

    /// One prediction record per (document, hypothesis).
    fn predict<'py>(&self, py: Python<'py>, corpus: &Corpus, vocab: &Vocabulary) -> PyResult<Bound<'py, PyAny>> {
        let (corpus, vocab) = (&corpus.inner, &vocab.inner);
        if self.inner.config.encoder.vocab_size != vocab.len() {
            return Err(value_err(format!(
                "model expects {} subwords but the vocabulary has {}",
                self.inner.config.encoder.vocab_size,
                vocab.len()
            )));
        }
        let config = &self.config;
        let records = py
            .detach(|| -> Result<_, String> {
                let docs = pipeline::tokenize_corpus(corpus, vocab).map_err(|e| e.to_string())?;
                if config.oracle_nli {
                    pipeline::predict_oracle(&self.inner, corpus, &docs, vocab, config.hypothesis_mode)
                } else {
                    let opts = PredictOptions {
                        hypothesis_mode: config.hypothesis_mode,
                        min_surrounding_tokens: config.segmentation.min_surrounding_tokens,
                        aggregation: config.aggregation(),
                    };
                    pipeline::predict_corpus(&self.inner, corpus, &docs, vocab, &opts)
                }
                .map_err(|e| e.to_string())
            })
            .map_err(runtime_err)?;
        to_py(py, &records)
    }
}

/// Character ranges of the spans of a raw text.
#[pyfunction]
fn split_text(text: &str) -> Vec<(usize, usize)> {
    segmentation::split_text(text)
        .into_iter()
        .map(|s| (s.char_start, s.char_end))
        .collect()
}

/// The model contexts of one document; windows are sized for the longest
/// hypothesis.
#[pyfunction]
#[pyo3(signature = (corpus, vocab, doc_id, max_sequence_length=512, min_surrounding_tokens=64))]
fn contexts<'py>(
    py: Python<'py>,
    corpus: &Corpus,
    vocab: &Vocabulary,
    doc_id: &str,
    max_sequence_length: usize,
    min_surrounding_tokens: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let doc = corpus
        .inner
        .document(doc_id)
        .ok_or_else(|| value_err(format!("no document `{doc_id}`")))?;
    let tokenized = TokenizedDocument::from_document(doc, &vocab.inner).map_err(value_err)?;
    let mode = ExperimentConfig::default().hypothesis_mode;
    let mut hyp_len = 0;
    for h in &corpus.inner.hypotheses {
        hyp_len = hyp_len.max(hypothesis_ids(h, &vocab.inner, mode).map_err(value_err)?.len());
    }
    let contexts =
        segment_for_sequence(&tokenized, hyp_len, max_sequence_length, min_surrounding_tokens).map_err(value_err)?;
    to_py(py, &contexts)
}

/// Combine per-context outputs. Each context is a dict with `covered_spans`,
/// `span_probs` and `nli_probs`; returns `(span_means, nli_probs)`.
#[pyfunction]
#[pyo3(signature = (contexts, span_ids, weighted=true))]
fn aggregate(
    contexts: &Bound<'_, PyAny>,
    span_ids: Vec<usize>,
    weighted: bool,
) -> PyResult<(Vec<(usize, f64)>, Vec<f64>)> {
    #[derive(serde::Deserialize)]
    struct Raw {
        covered_spans: Vec<usize>,
        span_probs: Vec<f64>,
        nli_probs: Vec<f64>,
    }
    let raw: Vec<Raw> = from_py(contexts)?;
    let outputs: Vec<ContextOutput> = raw
        .iter()
        .map(|r| ContextOutput {
            covered_spans: &r.covered_spans,
            span_probs: &r.span_probs,
            nli_probs: &r.nli_probs,
        })
        .collect();
    let mode = if weighted {
        NliAggregation::Weighted
    } else {
        NliAggregation::Unweighted
    };
    let spans = aggregate_spans(&outputs, &span_ids).map_err(value_err)?;
    let nli = aggregate_nli(&outputs, mode).map_err(value_err)?;
    Ok((spans, nli))
}

/// Score prediction records against `gold`. `undefined_f1` is "exclude" or
/// "zero".
#[pyfunction]
#[pyo3(signature = (gold, predictions, undefined_f1="exclude"))]
fn evaluate<'py>(
    py: Python<'py>,
    gold: &Corpus,
    predictions: &Bound<'py, PyAny>,
    undefined_f1: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let records: Vec<PredictionRecord> = from_py(predictions)?;
    let undefined_f1 = match undefined_f1 {
        "exclude" => UndefinedF1::Exclude,
        "zero" => UndefinedF1::Zero,
        other => return Err(value_err(format!("undefined_f1 must be exclude or zero, got {other:?}"))),
    };
    let opts = EvalOptions {
        undefined_f1,
        ..EvalOptions::default()
    };
    let report = metrics::evaluate(&gold.inner, &records, &opts).map_err(value_err)?;
    to_py(py, &report)
}

/// Fit a non-neural baseline on `train` and predict `target`.
#[pyfunction]
#[pyo3(signature = (kind, train, target, seed=0))]
fn baseline<'py>(
    py: Python<'py>,
    kind: &str,
    train: &Corpus,
    target: &Corpus,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: BaselineKind = serde_json::from_value(serde_json::Value::String(kind.to_string())).map_err(value_err)?;
    let svm = SvmConfig {
        seed,
        ..SvmConfig::default()
    };
    let (train, target) = (&train.inner, &target.inner);
    let records = match kind {
        BaselineKind::Majority => MajorityVote::fit(train).predict(target),
        BaselineKind::DocTfidfSvm => DocTfidfSvm::fit(train, &svm).predict(target),
        BaselineKind::SpanTfidfCosine => SpanTfidfCosine::fit(train).predict(target),
        BaselineKind::SpanTfidfSvm => SpanTfidfSvm::fit(train, &svm).predict(target),
        BaselineKind::Random => random_predictions(target, seed),
        BaselineKind::Squad => return Err(value_err("the extractive baseline is only available from the CLI")),
    };
    to_py(py, &records)
}

#[pymodule]
pub fn docnli_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Vocabulary>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(split_text, m)?)?;
    m.add_function(wrap_pyfunction!(contexts, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    Ok(())
}
