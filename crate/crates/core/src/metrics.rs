//! Evidence ranking and NLI classification metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{argmax, PredictionRecord};
use crate::corpus::{Corpus, NliLabel};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no gold evidence span")]
    NoGold,
    #[error("prediction for unknown pair ({doc_id}, {hypothesis_id})")]
    UnknownPair { doc_id: String, hypothesis_id: u32 },
    #[error("duplicate prediction for ({doc_id}, {hypothesis_id})")]
    DuplicatePair { doc_id: String, hypothesis_id: u32 },
}

/// Span ids ordered by descending score, ties by ascending id.
pub fn rank_spans(scores: &[(usize, f64)]) -> Vec<usize> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.into_iter().map(|(id, _)| id).collect()
}

/// Mean over gold spans of the precision at each gold span's rank.
pub fn average_precision(ranking: &[usize], gold: &BTreeSet<usize>) -> Result<f64, MetricsError> {
    if gold.is_empty() {
        return Err(MetricsError::NoGold);
    }
    let mut hits = 0;
    let mut sum = 0.0;
    for (rank, id) in ranking.iter().enumerate() {
        if gold.contains(id) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / gold.len() as f64)
}

/// 1-based ranks of the first and the last gold span.
pub fn spans_read(ranking: &[usize], gold: &BTreeSet<usize>) -> Result<(usize, usize), MetricsError> {
    let ranks: Vec<usize> = ranking
        .iter()
        .enumerate()
        .filter(|(_, id)| gold.contains(id))
        .map(|(r, _)| r + 1)
        .collect();
    match (ranks.first(), ranks.last()) {
        (Some(&first), Some(&last)) if ranks.len() == gold.len() => Ok((first, last)),
        _ => Err(MetricsError::NoGold),
    }
}

/// Precision at the highest score threshold whose recall reaches `target`,
/// sweeping distinct thresholds in descending order; 0 if never reached.
pub fn precision_at_recall(decisions: &[(f64, bool)], target: f64) -> f64 {
    let positives = decisions.iter().filter(|d| d.1).count();
    if positives == 0 {
        return 0.0;
    }
    let mut sorted = decisions.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            tp += usize::from(sorted[i].1);
            seen += 1;
            i += 1;
        }
        if tp as f64 / positives as f64 >= target {
            return tp as f64 / seen as f64;
        }
    }
    0.0
}

/// One (document, hypothesis) pair with gold evidence and its ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPair {
    pub hypothesis_id: u32,
    pub ranking: Vec<usize>,
    pub scores: Vec<f64>,
    pub gold: BTreeSet<usize>,
}

impl RankedPair {
    /// Rank `num_spans` spans; spans missing from `scores` rank last.
    pub fn new(hypothesis_id: u32, num_spans: usize, scores: &[(usize, f64)], gold: BTreeSet<usize>) -> Self {
        let known: HashMap<usize, f64> = scores.iter().copied().collect();
        let all: Vec<(usize, f64)> = (0..num_spans)
            .map(|id| (id, known.get(&id).copied().unwrap_or(f64::NEG_INFINITY)))
            .collect();
        let ranking = rank_spans(&all);
        let scores = ranking.iter().map(|id| all[*id].1).collect();
        RankedPair {
            hypothesis_id,
            ranking,
            scores,
            gold,
        }
    }
}

/// mAP over pairs. Per-hypothesis means averaged over hypotheses, or, with
/// `pooled`, the plain mean over all pairs.
pub fn mean_ap(pairs: &[RankedPair], pooled: bool) -> f64 {
    let aps: Vec<(u32, f64)> = pairs
        .iter()
        .filter_map(|p| average_precision(&p.ranking, &p.gold).ok().map(|ap| (p.hypothesis_id, ap)))
        .collect();
    if aps.is_empty() {
        return 0.0;
    }
    if pooled {
        return aps.iter().map(|(_, ap)| ap).sum::<f64>() / aps.len() as f64;
    }
    let mut by_hyp: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (h, ap) in aps {
        let e = by_hyp.entry(h).or_default();
        e.0 += ap;
        e.1 += 1;
    }
    by_hyp.values().map(|(s, n)| s / *n as f64).sum::<f64>() / by_hyp.len() as f64
}

/// Every span of every pair as a `(score, is_gold)` decision.
pub fn pooled_decisions(pairs: &[RankedPair]) -> Vec<(f64, bool)> {
    pairs
        .iter()
        .flat_map(|p| p.ranking.iter().zip(&p.scores).map(|(id, &s)| (s, p.gold.contains(id))))
        .collect()
}

/// How an F1 with no gold and no predicted instance of the class is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedF1 {
    /// Leave the hypothesis out of that class's macro mean.
    #[default]
    Exclude,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisScores {
    pub hypothesis_id: u32,
    pub documents: usize,
    pub accuracy: f64,
    pub f1_contradiction: Option<f64>,
    pub f1_entailment: Option<f64>,
    pub map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub accuracy: f64,
    pub f1_contradiction: f64,
    pub f1_entailment: f64,
    pub per_hypothesis: Vec<HypothesisScores>,
}

fn f1(gold: &[NliLabel], pred: &[NliLabel], class: NliLabel) -> Option<f64> {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (g, p) in gold.iter().zip(pred) {
        match (*g == class, *p == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0 {
        None
    } else {
        Some(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Accuracy and F1(C), F1(E) per hypothesis over its documents, then the
/// unweighted mean over hypotheses. Items are `(hypothesis, gold, predicted)`.
pub fn nli_scores(items: &[(u32, NliLabel, NliLabel)], undefined: UndefinedF1) -> NliScores {
    let mut by_hyp: BTreeMap<u32, (Vec<NliLabel>, Vec<NliLabel>)> = BTreeMap::new();
    for &(h, g, p) in items {
        let e = by_hyp.entry(h).or_default();
        e.0.push(g);
        e.1.push(p);
    }
    let per_hypothesis: Vec<HypothesisScores> = by_hyp
        .into_iter()
        .map(|(h, (gold, pred))| {
            let correct = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
            HypothesisScores {
                hypothesis_id: h,
                documents: gold.len(),
                accuracy: correct as f64 / gold.len() as f64,
                f1_contradiction: f1(&gold, &pred, NliLabel::Contradiction),
                f1_entailment: f1(&gold, &pred, NliLabel::Entailment),
                map: None,
            }
        })
        .collect();
    let class_mean = |get: fn(&HypothesisScores) -> Option<f64>| {
        mean(per_hypothesis.iter().filter_map(|h| match (get(h), undefined) {
            (Some(v), _) => Some(v),
            (None, UndefinedF1::Zero) => Some(0.0),
            (None, UndefinedF1::Exclude) => None,
        }))
    };
    NliScores {
        accuracy: mean(per_hypothesis.iter().map(|h| h.accuracy)),
        f1_contradiction: class_mean(|h| h.f1_contradiction),
        f1_entailment: class_mean(|h| h.f1_entailment),
        per_hypothesis,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub undefined_f1: UndefinedF1,
    pub target_recall: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            undefined_f1: UndefinedF1::Exclude,
            target_recall: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per-hypothesis mean AP, averaged over hypotheses.
    pub map: f64,
    /// Mean AP over all pairs.
    pub map_pooled: f64,
    pub p_at_r80: f64,
    pub nli_accuracy: f64,
    pub f1_contradiction: f64,
    pub f1_entailment: f64,
    pub spans_read_one: f64,
    pub spans_read_all: f64,
    pub evidence_pairs: usize,
    pub nli_pairs: usize,
    pub per_hypothesis: Vec<HypothesisScores>,
}

impl EvalReport {
    /// Aligned text table with the columns mAP, P@R80, Acc., F1(C), F1(E).
    pub fn table(&self, system: &str) -> String {
        let width = system.len().max(6);
        let mut out = String::new();
        writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
            "System", "mAP", "P@R80", "Acc.", "F1(C)", "F1(E)"
        )
        .unwrap();
        writeln!(
            out,
            "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}",
            system, self.map, self.p_at_r80, self.nli_accuracy, self.f1_contradiction, self.f1_entailment
        )
        .unwrap();
        out
    }
}

/// Score a prediction dump against the gold corpus.
///
/// Evidence metrics use Entailment/Contradiction pairs whose record has
/// spans; NLI metrics use every pair whose record has an NLI distribution.
/// Pairs without a record are skipped.
pub fn evaluate(gold: &Corpus, predictions: &[PredictionRecord], opts: &EvalOptions) -> Result<EvalReport, MetricsError> {
    let mut by_pair: HashMap<(&str, u32), &PredictionRecord> = HashMap::new();
    for r in predictions {
        let key = (r.doc_id.as_str(), r.hypothesis_id);
        let known = gold
            .documents
            .iter()
            .any(|d| d.doc_id == r.doc_id && d.annotations.contains_key(&r.hypothesis_id));
        if !known {
            return Err(MetricsError::UnknownPair {
                doc_id: r.doc_id.clone(),
                hypothesis_id: r.hypothesis_id,
            });
        }
        if by_pair.insert(key, r).is_some() {
            return Err(MetricsError::DuplicatePair {
                doc_id: r.doc_id.clone(),
                hypothesis_id: r.hypothesis_id,
            });
        }
    }

    let mut ranked = Vec::new();
    let mut nli_items = Vec::new();
    for doc in &gold.documents {
        for (&h, ann) in &doc.annotations {
            let Some(record) = by_pair.get(&(doc.doc_id.as_str(), h)) else {
                continue;
            };
            if let Some(nli) = record.nli {
                let pred = NliLabel::from_index(argmax(&nli)).expect("three classes");
                nli_items.push((h, ann.label, pred));
            }
            if ann.label != NliLabel::NotMentioned && !ann.evidence.is_empty() && !record.spans.is_empty() {
                let gold_set: BTreeSet<usize> = ann.evidence.iter().copied().collect();
                ranked.push(RankedPair::new(h, doc.spans.len(), &record.spans, gold_set));
            }
        }
    }

    let nli = nli_scores(&nli_items, opts.undefined_f1);
    let reads: Vec<(usize, usize)> = ranked.iter().filter_map(|p| spans_read(&p.ranking, &p.gold).ok()).collect();
    let mut per_hypothesis = nli.per_hypothesis;
    for h in per_hypothesis.iter_mut() {
        let own: Vec<RankedPair> = ranked.iter().filter(|p| p.hypothesis_id == h.hypothesis_id).cloned().collect();
        if !own.is_empty() {
            h.map = Some(mean_ap(&own, true));
        }
    }
    Ok(EvalReport {
        map: mean_ap(&ranked, false),
        map_pooled: mean_ap(&ranked, true),
        p_at_r80: precision_at_recall(&pooled_decisions(&ranked), opts.target_recall),
        nli_accuracy: nli.accuracy,
        f1_contradiction: nli.f1_contradiction,
        f1_entailment: nli.f1_entailment,
        spans_read_one: mean(reads.iter().map(|r| r.0 as f64)),
        spans_read_all: mean(reads.iter().map(|r| r.1 as f64)),
        evidence_pairs: ranked.len(),
        nli_pairs: nli_items.len(),
        per_hypothesis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set(ids: &[usize]) -> BTreeSet<usize> {
        ids.iter().copied().collect()
    }

    #[test]
    fn average_precision_cases() {
        assert_eq!(average_precision(&[2, 0, 1, 3], &set(&[2])).unwrap(), 1.0);
        assert_abs_diff_eq!(average_precision(&[0, 1, 2, 3], &set(&[0, 2])).unwrap(), 0.833_333_3, epsilon = 1e-6);
        assert_eq!(average_precision(&[0, 1], &set(&[])), Err(MetricsError::NoGold));
    }

    #[test]
    fn ties_break_by_span_id() {
        assert_eq!(rank_spans(&[(3, 0.5), (1, 0.5), (2, 0.9), (0, 0.1)]), vec![2, 1, 3, 0]);
    }

    #[test]
    fn spans_read_cases() {
        assert_eq!(spans_read(&[4, 1, 2], &set(&[4])).unwrap(), (1, 1));
        assert_eq!(spans_read(&[4, 1, 2, 7], &set(&[4, 7])).unwrap(), (1, 4));
        assert!(spans_read(&[4, 1], &set(&[9])).is_err());
    }

    #[test]
    fn precision_at_recall_cases() {
        let perfect = [(0.9, true), (0.8, true), (0.1, false)];
        assert_eq!(precision_at_recall(&perfect, 0.8), 1.0);
        let hopeless = [(0.0, true), (0.5, false)];
        // Recall 1.0 is reached only once the negative is included too.
        assert_eq!(precision_at_recall(&hopeless, 0.8), 0.5);
        assert_eq!(precision_at_recall(&[(0.3, false)], 0.8), 0.0);
        let tied = [(0.5, true), (0.5, false), (0.2, true)];
        assert_abs_diff_eq!(precision_at_recall(&tied, 0.5), 0.5);
    }

    #[test]
    fn mean_ap_schemes() {
        let pair = |h, ranking: Vec<usize>, gold: &[usize]| RankedPair {
            hypothesis_id: h,
            scores: vec![0.0; ranking.len()],
            ranking,
            gold: set(gold),
        };
        let pairs = vec![pair(1, vec![0, 1], &[0]), pair(1, vec![0, 1], &[1]), pair(2, vec![0, 1], &[1])];
        // Hypothesis 1: (1 + 0.5) / 2; hypothesis 2: 0.5.
        assert_abs_diff_eq!(mean_ap(&pairs, false), 0.625);
        assert_abs_diff_eq!(mean_ap(&pairs, true), 2.0 / 3.0);
        assert_eq!(mean_ap(&pairs[..1], false), 1.0);
    }

    #[test]
    fn nli_macro_average() {
        use NliLabel::*;
        let items = [
            (1, Entailment, Entailment),
            (1, NotMentioned, NotMentioned),
            (2, Entailment, Entailment),
            (2, Contradiction, Entailment),
        ];
        let s = nli_scores(&items, UndefinedF1::Exclude);
        assert_abs_diff_eq!(s.accuracy, 0.75);
        // Hypothesis 1 has no contradiction anywhere: excluded.
        assert_eq!(s.per_hypothesis[0].f1_contradiction, None);
        assert_eq!(s.f1_contradiction, 0.0);
        assert_abs_diff_eq!(s.f1_entailment, (1.0 + 2.0 / 3.0) / 2.0);
        let z = nli_scores(&[(1, Entailment, Entailment)], UndefinedF1::Zero);
        assert_eq!(z.f1_contradiction, 0.0);
        assert_eq!(z.f1_entailment, 1.0);
    }

    #[test]
    fn table_layout() {
        let report = EvalReport {
            map: 1.0,
            map_pooled: 1.0,
            p_at_r80: 0.5,
            nli_accuracy: 0.25,
            f1_contradiction: 0.0,
            f1_entailment: 0.125,
            spans_read_one: 1.0,
            spans_read_all: 1.0,
            evidence_pairs: 1,
            nli_pairs: 1,
            per_hypothesis: vec![],
        };
        let table = report.table("Majority vote");
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0].len(), lines[1].len());
        assert!(lines[1].ends_with(" 1.000   0.500   0.250   0.000   0.125"));
    }
}
