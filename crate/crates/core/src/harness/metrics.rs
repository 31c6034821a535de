use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{FusionModel, Head, Prediction};
use crate::heads::{extract_spans, Span};
use crate::treebank::{Payload, Sentence};

use super::parallel::map_sentences;

/// Corpus-level micro scores plus per-sentence F1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
    pub per_sentence_f1: Vec<f64>,
    /// Set when there was nothing to predict and nothing was predicted.
    pub empty_support: bool,
    /// Token tag accuracy for tagging, instance accuracy for relations.
    pub accuracy: f64,
}

/// Micro precision/recall/F1 from counts. With no predictions and no gold
/// items all three are 1; otherwise an empty denominator gives 0.
pub fn prf(correct: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    if predicted == 0 && gold == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if predicted == 0 { 0.0 } else { correct as f64 / predicted as f64 };
    let r = if gold == 0 { 0.0 } else { correct as f64 / gold as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

impl MetricsReport {
    pub fn from_counts(counts: &[(usize, usize, usize)], accuracy: f64) -> Self {
        let correct = counts.iter().map(|c| c.0).sum();
        let predicted = counts.iter().map(|c| c.1).sum();
        let gold = counts.iter().map(|c| c.2).sum();
        let (precision, recall, f1) = prf(correct, predicted, gold);
        Self {
            precision,
            recall,
            f1,
            correct,
            predicted,
            gold,
            per_sentence_f1: counts.iter().map(|&(c, p, g)| prf(c, p, g).2).collect(),
            empty_support: predicted == 0 && gold == 0,
            accuracy,
        }
    }

    /// `P=x.xxxx R=x.xxxx F1=x.xxxx`
    pub fn summary(&self) -> String {
        format!("P={:.4} R={:.4} F1={:.4}", self.precision, self.recall, self.f1)
    }
}

/// `(correct, predicted, gold)` span counts for one sentence.
pub fn span_counts(predicted: &[Span], gold: &[Span]) -> (usize, usize, usize) {
    let g: BTreeSet<&Span> = gold.iter().collect();
    let p: BTreeSet<&Span> = predicted.iter().collect();
    (p.intersection(&g).count(), p.len(), g.len())
}

/// Counts for one relation decision with `none` excluded from both sides.
pub fn relation_counts(predicted: usize, gold: usize, none: usize) -> (usize, usize, usize) {
    let p = usize::from(predicted != none);
    let g = usize::from(gold != none);
    (usize::from(p == 1 && predicted == gold), p, g)
}

struct TagOutcome {
    counts: (usize, usize, usize),
    tokens: usize,
    tokens_right: usize,
}

pub fn eval_spans(model: &FusionModel, data: &[Sentence]) -> Result<MetricsReport> {
    let Head::Crf { tags, .. } = &model.head else {
        return Err(Error::Compat("span evaluation needs a tagging model".into()));
    };
    let outcomes = map_sentences(data, |s| {
        let gold_tags = s
            .payload
            .tags()
            .ok_or_else(|| Error::Compat("span evaluation needs tag payloads".into()))?;
        let gold_ids = tags.encode(gold_tags)?;
        let Prediction::Tags(pred) = model.predict(s)? else {
            unreachable!("tagging head predicts tags")
        };
        let pred_tags = tags.decode(&pred);
        Ok(TagOutcome {
            counts: span_counts(&extract_spans(&pred_tags), &extract_spans(gold_tags)),
            tokens: pred.len(),
            tokens_right: pred.iter().zip(&gold_ids).filter(|(a, b)| a == b).count(),
        })
    })?;
    let counts: Vec<_> = outcomes.iter().map(|o| o.counts).collect();
    let tokens: usize = outcomes.iter().map(|o| o.tokens).sum();
    let right: usize = outcomes.iter().map(|o| o.tokens_right).sum();
    let acc = if tokens == 0 { 0.0 } else { right as f64 / tokens as f64 };
    Ok(MetricsReport::from_counts(&counts, acc))
}

pub fn eval_relations(model: &FusionModel, data: &[Sentence]) -> Result<MetricsReport> {
    let Head::Relation { relations, .. } = &model.head else {
        return Err(Error::Compat("relation evaluation needs a relation model".into()));
    };
    let none = relations.no_relation();
    let pairs = map_sentences(data, |s| {
        let Payload::Relation { relation, .. } = &s.payload else {
            return Err(Error::Compat("relation evaluation needs relation payloads".into()));
        };
        let gold = relations
            .id(relation)
            .ok_or_else(|| Error::Compat(format!("relation {relation:?} unknown to the model")))?;
        let Prediction::Relation(pred) = model.predict(s)? else {
            unreachable!("relation head predicts relations")
        };
        Ok((pred, gold))
    })?;
    Ok(relation_report(&pairs, none))
}

/// Micro scores over `(predicted, gold)` relation ids.
pub fn relation_report(pairs: &[(usize, usize)], none: usize) -> MetricsReport {
    let counts: Vec<_> = pairs.iter().map(|&(p, g)| relation_counts(p, g, none)).collect();
    let acc = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().filter(|(p, g)| p == g).count() as f64 / pairs.len() as f64
    };
    MetricsReport::from_counts(&counts, acc)
}

/// Span or relation metrics depending on the model head.
pub fn evaluate(model: &FusionModel, data: &[Sentence]) -> Result<MetricsReport> {
    match model.head {
        Head::Crf { .. } => eval_spans(model, data),
        Head::Relation { .. } => eval_relations(model, data),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prf_conventions() {
        assert_eq!(prf(0, 0, 3), (0.0, 0.0, 0.0));
        assert_eq!(prf(0, 0, 0), (1.0, 1.0, 1.0));
        let (p, r, f) = prf(1, 2, 4);
        assert_eq!((p, r), (0.5, 0.25));
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn relation_micro_scores() {
        // labels: 0 = a, 1 = no_relation, 2 = b
        let pairs = [(0, 0), (2, 0), (1, 2), (2, 2), (1, 1), (0, 1)];
        let r = relation_report(&pairs, 1);
        // predicted positives: 0,2,2,0 -> 4; gold positives: 0,0,2,2 -> 4; correct: 2
        assert_eq!((r.correct, r.predicted, r.gold), (2, 4, 4));
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        let all_none = relation_report(&[(1, 1), (1, 1)], 1);
        assert!(all_none.empty_support);
        assert_eq!(all_none.f1, 1.0);
    }

    #[test]
    fn span_counting_is_exact_match() {
        let s = |a, b, l: &str| Span {
            start: a,
            end: b,
            label: l.into(),
        };
        let gold = [s(0, 2, "A"), s(3, 4, "B")];
        let pred = [s(0, 2, "A"), s(3, 4, "A"), s(5, 6, "B")];
        assert_eq!(span_counts(&pred, &gold), (1, 3, 2));
    }
}
