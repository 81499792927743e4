//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails. Criterion 7 runs only when
//! `CONTRACTNLI_DIR` points at the released dataset (train.json, dev.json,
//! test.json).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use docnli::aggregate::{aggregate_nli, aggregate_spans, ContextOutput, NliAggregation};
use docnli::baselines::{random_predictions, MajorityVote, SpanTfidfCosine, SpanTfidfSvm, SvmConfig};
use docnli::cli::ExperimentConfig;
use docnli::context::{segment, Context, SegmentationConfig, Teacher};
use docnli::corpus::{import_contractnli, parse_corpus, NliLabel};
use docnli::metrics::{
    average_precision, evaluate, mean_ap, nli_scores, precision_at_recall, rank_spans, spans_read, EvalOptions,
    RankedPair, UndefinedF1,
};
use docnli::model::{
    build_examples, gradient_check, loss_total, train, ContextPrediction, EncoderConfig, GradCheckOptions, Model,
    ModelConfig,
};
use docnli::pipeline::{fit_vocabulary, predict_corpus, tokenize_corpus, PredictOptions};
use docnli::segmentation::{TokenizedDocument, VocabBuilder};
use docnli::synthetic::BUNDLED_JSON;

// Criterion 1
const COVERAGE_DOCS: usize = 1000;
const MAX_SPAN_TOKENS: usize = 289;
const MAX_DOC_TOKENS: usize = 12_000;
const COVERAGE_BUDGET: Duration = Duration::from_secs(30);
// Criterion 2
const GRADCHECK_TOL: f64 = 1e-4;
const GRADCHECK_SAMPLES: usize = 200;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(60);
// Criteria 4 and 5
const ORACLE_FIXTURES: usize = 1000;
const AGGREGATE_TOL: f64 = 1e-9;
const EQUAL_WEIGHT_TOL: f64 = 1e-12;
const METRICS_TOL: f64 = 1e-9;
const HAND_AP: f64 = 0.8333;
const HAND_AP_TOL: f64 = 5e-5;
// Criterion 6
const OVERFIT_MIN: f64 = 0.95;
const OVERFIT_MAX_EPOCHS: usize = 200;
const OVERFIT_BUDGET: Duration = Duration::from_secs(300);
// Criterion 7
const MAJORITY_ROW: [f64; 3] = [0.674, 0.083, 0.428];
const MAJORITY_TOL: f64 = 0.001;
const RANDOM_MAP: (f64, f64) = (0.024, 0.01);
const COSINE_MAP: (f64, f64) = (0.381, 0.05);
const SVM_MAP: (f64, f64) = (0.836, 0.05);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("segmentation coverage", coverage),
        ("gradient check", gradcheck),
        ("loss mask", loss_mask),
        ("aggregation oracle", aggregation),
        ("metrics oracle", metrics),
        ("end-to-end overfit", overfit),
        ("released-data baselines", released_baselines),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {}: {tag} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

fn random_layout(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let target = rng.random_range(1..=MAX_DOC_TOKENS);
    let mut spans = vec![rng.random_range(1..=MAX_SPAN_TOKENS.min(target))];
    let mut total = spans[0];
    loop {
        let len = rng.random_range(1..=MAX_SPAN_TOKENS);
        if total + len > target {
            return spans;
        }
        total += len;
        spans.push(len);
    }
}

/// Every problem found by brute force, given span token ranges.
fn coverage_violations(ranges: &[(usize, usize)], contexts: &[Context], l: usize, n: usize) -> Vec<String> {
    let mut problems = Vec::new();
    for (m, c) in contexts.iter().enumerate() {
        let (cs, ce) = c.token_range;
        if ce - cs > l {
            problems.push(format!("context {m} has {} > {l} tokens", ce - cs));
        }
        let inside: Vec<usize> = (0..ranges.len())
            .filter(|&k| ranges[k].0 >= cs && ranges[k].1 <= ce)
            .collect();
        if inside != c.covered_spans {
            problems.push(format!("context {m} covered spans differ"));
        }
        if m > 0 {
            let earlier = &contexts[..m];
            let first_new = (0..ranges.len())
                .find(|&k| !earlier.iter().any(|p| ranges[k].0 >= p.token_range.0 && ranges[k].1 <= p.token_range.1));
            if let Some(k) = first_new {
                let (s, e) = ranges[k];
                if e - s + n <= l && cs != s.saturating_sub(n) {
                    problems.push(format!("context {m} starts at {cs}, expected {}", s.saturating_sub(n)));
                }
            }
        }
    }
    for (k, &(s, e)) in ranges.iter().enumerate() {
        if !contexts.iter().any(|c| s >= c.token_range.0 && e <= c.token_range.1) {
            problems.push(format!("span {k} [{s}, {e}) is not inside any context"));
        }
    }
    problems
}

fn coverage() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let l = 512 - 3;
    let mut spans_checked = 0;
    for d in 0..COVERAGE_DOCS {
        let layout = random_layout(&mut rng);
        let n = if d % 2 == 0 { 64 } else { 128 };
        let doc = TokenizedDocument::synthetic(&format!("doc{d}"), &layout);
        let contexts = match segment(&doc, SegmentationConfig::new(l, n).unwrap()) {
            Ok(c) => c,
            Err(e) => return Outcome::Fail(format!("doc {d}: {e}")),
        };
        let ranges: Vec<(usize, usize)> = (0..doc.num_spans()).map(|k| doc.span_range(k)).collect();
        let problems = coverage_violations(&ranges, &contexts, l, n);
        if let Some(p) = problems.first() {
            return Outcome::Fail(format!("doc {d}: {p}"));
        }
        spans_checked += ranges.len();
    }
    let elapsed = start.elapsed();
    verdict(
        elapsed < COVERAGE_BUDGET,
        format!("{COVERAGE_DOCS} documents, {spans_checked} spans covered in {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------- 2

fn gradcheck() -> Outcome {
    let corpus = parse_corpus(BUNDLED_JSON).unwrap();
    let vocab = fit_vocabulary(&corpus, &VocabBuilder { target_size: 1000, min_pair_frequency: 2 });
    let docs = tokenize_corpus(&corpus, &vocab).unwrap();
    let max_seq = 48;
    let examples = build_examples(&corpus, &docs, &vocab, Default::default(), max_seq, 8).unwrap();
    // One context with evidence, one without, so both loss terms contribute.
    let with = examples.iter().find(|e| e.teacher.has_evidence).unwrap().clone();
    let without = examples.iter().find(|e| !e.teacher.has_evidence).unwrap().clone();
    let mut encoder = EncoderConfig::desk(vocab.len());
    encoder.max_positions = max_seq;
    let model = Model::new(ModelConfig { encoder, nli_classes: 3 }, 3).unwrap();

    let start = Instant::now();
    let opts = GradCheckOptions {
        samples: GRADCHECK_SAMPLES,
        ..GradCheckOptions::default()
    };
    let report = gradient_check(&model, &[with, without], &opts).unwrap();
    let elapsed = start.elapsed();
    verdict(
        report.max_rel_error <= GRADCHECK_TOL && report.entries.len() >= GRADCHECK_SAMPLES && elapsed < GRADCHECK_BUDGET,
        format!(
            "d = 64, 2 layers, {} parameters, max rel. error {:.2e} in {elapsed:.2?}",
            report.entries.len(),
            report.max_rel_error
        ),
    )
}

// ---------------------------------------------------------------- 3

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn loss_mask() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for f in 0..100 {
        let spans = rng.random_range(1..12);
        let span_probs: Vec<f64> = (0..spans).map(|_| rng.random_range(0.0..1.0)).collect();
        let teacher = Teacher {
            span_labels: vec![0; spans],
            nli: NliLabel::from_index(rng.random_range(0..3)).unwrap(),
            has_evidence: false,
        };
        let lambda = [0.05, 0.1, 0.2, 0.4][f % 4];
        let logits: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let before = ContextPrediction {
            span_probs: span_probs.clone(),
            nli_probs: softmax(&logits),
        };
        let base = loss_total(&before, &teacher, lambda).unwrap();
        for _ in 0..10 {
            let shifted: Vec<f64> = logits.iter().map(|z| z + rng.random_range(-20.0..20.0)).collect();
            let after = ContextPrediction {
                span_probs: span_probs.clone(),
                nli_probs: softmax(&shifted),
            };
            let loss = loss_total(&after, &teacher, lambda).unwrap();
            if loss - base != 0.0 {
                return Outcome::Fail(format!("fixture {f}: loss moved by {:e}", loss - base));
            }
            checked += 1;
        }
    }
    Outcome::Pass(format!("100 fixtures, {checked} perturbations, change exactly 0"))
}

// ---------------------------------------------------------------- 4

struct Fixture {
    covered: Vec<Vec<usize>>,
    span_probs: Vec<Vec<f64>>,
    nli_probs: Vec<Vec<f64>>,
}

impl Fixture {
    fn outputs(&self) -> Vec<ContextOutput<'_>> {
        (0..self.covered.len())
            .map(|m| ContextOutput {
                covered_spans: &self.covered[m],
                span_probs: &self.span_probs[m],
                nli_probs: &self.nli_probs[m],
            })
            .collect()
    }
}

fn random_distribution(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Contexts over contiguous span windows that together cover every span;
/// roughly one in six contexts covers nothing.
fn random_fixture(rng: &mut ChaCha8Rng, num_spans: usize) -> Fixture {
    let mut covered = Vec::new();
    let mut next = 0;
    while next < num_spans {
        if rng.random_range(0..6) == 0 {
            covered.push(Vec::new());
            continue;
        }
        let start = next.saturating_sub(rng.random_range(0..3));
        let end = (next + rng.random_range(1..6)).min(num_spans);
        covered.push((start..end).collect::<Vec<_>>());
        next = end;
    }
    let span_probs = covered
        .iter()
        .map(|c| c.iter().map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let nli_probs = covered.iter().map(|_| random_distribution(rng)).collect();
    Fixture {
        covered,
        span_probs,
        nli_probs,
    }
}

/// Span i: mean over contexts holding it. NLI: contexts with spans, weighted
/// by their mean span probability (or uniformly).
fn naive_aggregate(fx: &Fixture, num_spans: usize, weighted: bool) -> (Vec<f64>, Vec<f64>) {
    let spans = (0..num_spans)
        .map(|i| {
            let mut values = Vec::new();
            for (m, ids) in fx.covered.iter().enumerate() {
                for (j, &id) in ids.iter().enumerate() {
                    if id == i {
                        values.push(fx.span_probs[m][j]);
                    }
                }
            }
            values.iter().sum::<f64>() / values.len() as f64
        })
        .collect();
    let mut numerator = [0.0; 3];
    let mut denominator = 0.0;
    for m in 0..fx.covered.len() {
        let s_m = fx.covered[m].len();
        if s_m == 0 {
            continue;
        }
        let w = if weighted {
            fx.span_probs[m].iter().sum::<f64>() / s_m as f64
        } else {
            1.0
        };
        for c in 0..3 {
            numerator[c] += w * fx.nli_probs[m][c];
        }
        denominator += w;
    }
    (spans, numerator.iter().map(|v| v / denominator).collect())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut worst_equal: f64 = 0.0;
    for f in 0..ORACLE_FIXTURES {
        let num_spans = rng.random_range(1..30);
        let fx = random_fixture(&mut rng, num_spans);
        if fx.covered.len() < 2 && f % 2 == 0 {
            continue;
        }
        let ids: Vec<usize> = (0..num_spans).collect();
        let outputs = fx.outputs();
        let spans: Vec<f64> = aggregate_spans(&outputs, &ids).unwrap().into_iter().map(|(_, p)| p).collect();
        for (weighted, mode) in [(true, NliAggregation::Weighted), (false, NliAggregation::Unweighted)] {
            let (naive_spans, naive_nli) = naive_aggregate(&fx, num_spans, weighted);
            let nli = aggregate_nli(&outputs, mode).unwrap();
            worst = worst.max(max_abs_diff(&spans, &naive_spans)).max(max_abs_diff(&nli, &naive_nli));
        }

        // Same mean span probability in every context.
        let level = rng.random_range(0.2..0.8);
        let mut equal = fx;
        for probs in equal.span_probs.iter_mut() {
            let noise: Vec<f64> = probs.iter().map(|_| rng.random_range(-0.1..0.1)).collect();
            let centre = noise.iter().sum::<f64>() / noise.len().max(1) as f64;
            for (p, d) in probs.iter_mut().zip(noise) {
                *p = level + d - centre;
            }
        }
        let outputs = equal.outputs();
        let weighted = aggregate_nli(&outputs, NliAggregation::Weighted).unwrap();
        let unweighted = aggregate_nli(&outputs, NliAggregation::Unweighted).unwrap();
        worst_equal = worst_equal.max(max_abs_diff(&weighted, &unweighted));
    }
    verdict(
        worst <= AGGREGATE_TOL && worst_equal <= EQUAL_WEIGHT_TOL,
        format!("max deviation {worst:.1e}, weighted vs unweighted at equal weights {worst_equal:.1e}"),
    )
}

// ---------------------------------------------------------------- 5

/// 1-based rank by brute force: spans strictly ahead of `j`, plus one.
fn brute_rank(scores: &[f64], j: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&k| scores[k] > scores[j] || (scores[k] == scores[j] && k < j))
        .count()
}

fn brute_ap(scores: &[f64], gold: &BTreeSet<usize>) -> f64 {
    let ranks: Vec<usize> = gold.iter().map(|&g| brute_rank(scores, g)).collect();
    ranks
        .iter()
        .map(|&r| ranks.iter().filter(|&&q| q <= r).count() as f64 / r as f64)
        .sum::<f64>()
        / gold.len() as f64
}

fn brute_precision_at_recall(decisions: &[(f64, bool)], target: f64) -> f64 {
    let positives = decisions.iter().filter(|d| d.1).count() as f64;
    let mut best: Option<(f64, f64)> = None;
    for &(t, _) in decisions {
        let kept: Vec<&(f64, bool)> = decisions.iter().filter(|d| d.0 >= t).collect();
        let tp = kept.iter().filter(|d| d.1).count() as f64;
        if tp / positives >= target && best.is_none_or(|(bt, _)| t > bt) {
            best = Some((t, tp / kept.len() as f64));
        }
    }
    best.map_or(0.0, |(_, p)| p)
}

fn brute_f1(gold: &[NliLabel], pred: &[NliLabel], class: NliLabel) -> Option<f64> {
    let tp = gold.iter().zip(pred).filter(|(g, p)| **g == class && **p == class).count() as f64;
    let predicted = pred.iter().filter(|p| **p == class).count() as f64;
    let actual = gold.iter().filter(|g| **g == class).count() as f64;
    if predicted == 0.0 && actual == 0.0 {
        return None;
    }
    if tp == 0.0 {
        return Some(0.0);
    }
    let (p, r) = (tp / predicted, tp / actual);
    Some(2.0 * p * r / (p + r))
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Coarse scores in half the fixtures to exercise ties.
    let coarse = rng.random_bool(0.5);
    (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.0..1.0);
            if coarse {
                (v * 5.0).floor() / 5.0
            } else {
                v
            }
        })
        .collect()
}

fn metrics() -> Outcome {
    let hand = average_precision(&[1, 2, 3, 4], &[1, 3].into_iter().collect()).unwrap();
    if (hand - HAND_AP).abs() > HAND_AP_TOL {
        return Outcome::Fail(format!("AP({{1,3}} of 4) = {hand}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..ORACLE_FIXTURES {
        let mut pairs = Vec::new();
        let mut brute_by_hyp: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
        let mut decisions = Vec::new();
        for _ in 0..rng.random_range(1..8) {
            let n = rng.random_range(2..80);
            let scores = random_scores(&mut rng, n);
            let num_gold = rng.random_range(1..=n.min(5));
            let mut gold = BTreeSet::new();
            while gold.len() < num_gold {
                gold.insert(rng.random_range(0..n));
            }
            let h = rng.random_range(1..5);
            let scored: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
            let ranking = rank_spans(&scored);
            let ap = average_precision(&ranking, &gold).unwrap();
            let expected = brute_ap(&scores, &gold);
            worst = worst.max((ap - expected).abs());

            let (first, last) = spans_read(&ranking, &gold).unwrap();
            let ranks: Vec<usize> = gold.iter().map(|&g| brute_rank(&scores, g)).collect();
            if (first, last) != (*ranks.iter().min().unwrap(), *ranks.iter().max().unwrap()) {
                return Outcome::Fail(format!("spans_read {:?} vs brute force {:?}", (first, last), ranks));
            }
            brute_by_hyp.entry(h).or_default().push(expected);
            decisions.extend(scores.iter().enumerate().map(|(i, &s)| (s, gold.contains(&i))));
            pairs.push(RankedPair::new(h, n, &scored, gold));
        }
        let macro_map = brute_by_hyp
            .values()
            .map(|aps| aps.iter().sum::<f64>() / aps.len() as f64)
            .sum::<f64>()
            / brute_by_hyp.len() as f64;
        let all: Vec<f64> = brute_by_hyp.values().flatten().copied().collect();
        let pooled_map = all.iter().sum::<f64>() / all.len() as f64;
        worst = worst
            .max((mean_ap(&pairs, false) - macro_map).abs())
            .max((mean_ap(&pairs, true) - pooled_map).abs());
        let p = precision_at_recall(&decisions, 0.8);
        worst = worst.max((p - brute_precision_at_recall(&decisions, 0.8)).abs());

        let items: Vec<(u32, NliLabel, NliLabel)> = (0..rng.random_range(1..60))
            .map(|_| {
                let label = |r: &mut ChaCha8Rng| NliLabel::from_index(r.random_range(0..3)).unwrap();
                (rng.random_range(1..5), label(&mut rng), label(&mut rng))
            })
            .collect();
        for undefined in [UndefinedF1::Exclude, UndefinedF1::Zero] {
            let scores = nli_scores(&items, undefined);
            let hyps: BTreeSet<u32> = items.iter().map(|i| i.0).collect();
            let mut acc = Vec::new();
            let mut f1c = Vec::new();
            let mut f1e = Vec::new();
            for h in &hyps {
                let gold: Vec<NliLabel> = items.iter().filter(|i| i.0 == *h).map(|i| i.1).collect();
                let pred: Vec<NliLabel> = items.iter().filter(|i| i.0 == *h).map(|i| i.2).collect();
                acc.push(gold.iter().zip(&pred).filter(|(g, p)| g == p).count() as f64 / gold.len() as f64);
                for (out, class) in [(&mut f1c, NliLabel::Contradiction), (&mut f1e, NliLabel::Entailment)] {
                    match (brute_f1(&gold, &pred, class), undefined) {
                        (Some(v), _) => out.push(v),
                        (None, UndefinedF1::Zero) => out.push(0.0),
                        (None, UndefinedF1::Exclude) => {}
                    }
                }
            }
            let avg = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            worst = worst
                .max((scores.accuracy - avg(&acc)).abs())
                .max((scores.f1_contradiction - avg(&f1c)).abs())
                .max((scores.f1_entailment - avg(&f1e)).abs());
        }
    }
    verdict(
        worst <= METRICS_TOL,
        format!("AP({{1,3}} of 4) = {hand:.4}; max deviation over {ORACLE_FIXTURES} fixtures {worst:.1e}"),
    )
}

// ---------------------------------------------------------------- 6

fn overfit() -> Outcome {
    let config = ExperimentConfig::synthetic();
    if config.train.epochs > OVERFIT_MAX_EPOCHS {
        return Outcome::Fail(format!("preset trains for {} epochs", config.train.epochs));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let start = Instant::now();
        let corpus = parse_corpus(BUNDLED_JSON).unwrap();
        let vocab = fit_vocabulary(&corpus, &config.vocab.builder());
        let docs = tokenize_corpus(&corpus, &vocab).unwrap();
        let examples = build_examples(
            &corpus,
            &docs,
            &vocab,
            config.hypothesis_mode,
            config.segmentation.max_sequence_length,
            config.segmentation.min_surrounding_tokens,
        )
        .unwrap();
        let mut model = Model::new(config.model_config(vocab.len()), config.train.seed).unwrap();
        train(&mut model, &examples, &config.train).unwrap();
        let opts = PredictOptions {
            hypothesis_mode: config.hypothesis_mode,
            min_surrounding_tokens: config.segmentation.min_surrounding_tokens,
            aggregation: config.aggregation(),
        };
        let records = predict_corpus(&model, &corpus, &docs, &vocab, &opts).unwrap();
        let report = evaluate(&corpus, &records, &EvalOptions::default()).unwrap();
        let elapsed = start.elapsed();
        verdict(
            report.nli_accuracy >= OVERFIT_MIN && report.map >= OVERFIT_MIN && elapsed < OVERFIT_BUDGET,
            format!(
                "{} epochs on {} contexts: NLI accuracy {:.3}, mAP {:.3} in {elapsed:.2?} on one thread",
                config.train.epochs,
                examples.len(),
                report.nli_accuracy,
                report.map
            ),
        )
    })
}

// ---------------------------------------------------------------- 7

fn within(value: f64, (target, tol): (f64, f64)) -> bool {
    (value - target).abs() <= tol
}

fn released_baselines() -> Outcome {
    let Some(dir) = std::env::var_os("CONTRACTNLI_DIR").map(PathBuf::from) else {
        return Outcome::Skip("CONTRACTNLI_DIR not set".into());
    };
    let load = |name: &str| import_contractnli(dir.join(name));
    let (train_set, test_set) = match (load("train.json"), load("test.json")) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::Fail(format!("cannot import dataset: {e}")),
    };
    let opts = EvalOptions::default();
    let score = |records: Vec<docnli::aggregate::PredictionRecord>| evaluate(&test_set, &records, &opts).unwrap();
    let majority = score(MajorityVote::fit(&train_set).predict(&test_set));
    let random = score(random_predictions(&test_set, 0));
    let cosine = score(SpanTfidfCosine::fit(&train_set).predict(&test_set));
    let svm = score(SpanTfidfSvm::fit(&train_set, &SvmConfig::default()).predict(&test_set));
    let row = [majority.nli_accuracy, majority.f1_contradiction, majority.f1_entailment];
    let majority_ok = row.iter().zip(MAJORITY_ROW).all(|(v, t)| (v - t).abs() <= MAJORITY_TOL);
    verdict(
        majority_ok && within(random.map, RANDOM_MAP) && within(cosine.map, COSINE_MAP) && within(svm.map, SVM_MAP),
        format!(
            "majority acc/F1(C)/F1(E) {:.3}/{:.3}/{:.3}; mAP random {:.3}, cosine {:.3}, SVM {:.3}",
            row[0], row[1], row[2], random.map, cosine.map, svm.map
        ),
    )
}

// ---------------------------------------------------------------- 8

fn cli(args: &[&str]) -> i32 {
    docnli::cli::run(std::iter::once("docnli").chain(args.iter().copied()))
}

fn train_and_predict(dir: &Path) -> Result<Vec<u8>, String> {
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let mut config = ExperimentConfig::synthetic();
    config.paths.train_corpus = "synthetic.json".into();
    config.train.epochs = 3;
    std::fs::write(dir.join("config.json"), config.to_json()).map_err(|e| e.to_string())?;
    for args in [
        vec!["synth", "--output", &path("synthetic.json")],
        vec!["train", "--config", &path("config.json")],
        vec!["predict", "--config", &path("config.json")],
    ] {
        let code = cli(&args);
        if code != 0 {
            return Err(format!("`{}` exited with {code}", args.join(" ")));
        }
    }
    std::fs::read(dir.join("out/predictions.jsonl")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut dumps = Vec::new();
    for dir in &dirs {
        match train_and_predict(dir.path()) {
            Ok(bytes) => dumps.push(bytes),
            Err(e) => return Outcome::Fail(e),
        }
    }
    verdict(
        !dumps[0].is_empty() && dumps[0] == dumps[1],
        format!("two train + predict runs, dumps of {} bytes, identical: {}", dumps[0].len(), dumps[0] == dumps[1]),
    )
}
