//! Span-based tokenization and tagging scores.
//!
//! Spans index non-space characters, so predictions made on re-spaced
//! text can be scored against the original gold tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Sentence, Span, TagDoc};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("gold has {gold} sentences but prediction has {pred}")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {sentence}: spans {a:?} and {b:?} overlap")]
    Overlap { sentence: usize, a: Span, b: Span },
    #[error("sentence {sentence}: empty span at {at}")]
    EmptySpan { sentence: usize, at: usize },
    #[error("sentence {sentence}: gold covers {gold} characters but prediction covers {pred}")]
    Misaligned { sentence: usize, gold: usize, pred: usize },
}

/// A span with its accepted labels (one for predictions, a set for
/// noisy gold). An empty label list scores tokenization only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub labels: Vec<String>,
}

impl LabeledSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        LabeledSpan {
            start,
            end,
            labels: vec![label.into()],
        }
    }

    pub fn with_labels(start: usize, end: usize, labels: Vec<String>) -> Self {
        LabeledSpan { start, end, labels }
    }

    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }

    fn shares_label(&self, other: &LabeledSpan) -> bool {
        self.labels.iter().any(|l| other.labels.contains(l))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

/// Match counts, micro-averaged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub matched: usize,
    pub pred: usize,
    pub gold: usize,
}

impl Counts {
    pub fn prf(&self) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.matched, self.pred);
        let r = ratio(self.matched, self.gold);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf { p, r, f1 }
    }
}

/// Gold spans of a sentence, labelled with each token's accepted set.
pub fn gold_spans(s: &Sentence) -> Vec<LabeledSpan> {
    s.tokens
        .iter()
        .map(|t| LabeledSpan::with_labels(t.span.start, t.span.end, t.gold_upos.clone()))
        .collect()
}

/// Predicted spans of a sentence, labelled with each token's UPOS.
pub fn pred_spans(s: &Sentence) -> Vec<LabeledSpan> {
    s.tokens
        .iter()
        .map(|t| LabeledSpan::new(t.span.start, t.span.end, t.upos.clone()))
        .collect()
}

fn check_disjoint(sentence: usize, spans: &[LabeledSpan]) -> Result<(), MetricsError> {
    let mut sorted: Vec<Span> = spans.iter().map(LabeledSpan::span).collect();
    sorted.sort();
    for s in &sorted {
        if s.is_empty() {
            return Err(MetricsError::EmptySpan { sentence, at: s.start });
        }
    }
    for w in sorted.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(MetricsError::Overlap {
                sentence,
                a: w[0],
                b: w[1],
            });
        }
    }
    Ok(())
}

fn check_pair(gold: &[Vec<LabeledSpan>], pred: &[Vec<LabeledSpan>]) -> Result<(), MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::SentenceCount {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        check_disjoint(i, g)?;
        check_disjoint(i, p)?;
    }
    Ok(())
}

fn span_counts(gold: &[Vec<LabeledSpan>], pred: &[Vec<LabeledSpan>], joint: bool) -> Result<Counts, MetricsError> {
    check_pair(gold, pred)?;
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        c.gold += g.len();
        c.pred += p.len();
        let index: HashMap<(usize, usize), &LabeledSpan> = g.iter().map(|s| ((s.start, s.end), s)).collect();
        c.matched += p
            .iter()
            .filter(|s| match index.get(&(s.start, s.end)) {
                Some(gs) => !joint || s.shares_label(gs),
                None => false,
            })
            .count();
    }
    Ok(c)
}

/// Exact span-match F1.
pub fn token_f1(gold: &[Vec<LabeledSpan>], pred: &[Vec<LabeledSpan>]) -> Result<Prf, MetricsError> {
    Ok(span_counts(gold, pred, false)?.prf())
}

/// Span match plus a predicted label inside the gold label set.
pub fn joint_f1(gold: &[Vec<LabeledSpan>], pred: &[Vec<LabeledSpan>]) -> Result<Prf, MetricsError> {
    Ok(span_counts(gold, pred, true)?.prf())
}

/// Share of gold tokens that some overlapping predicted span labels
/// correctly.
pub fn relaxed_accuracy(gold: &[Vec<LabeledSpan>], pred: &[Vec<LabeledSpan>]) -> Result<f64, MetricsError> {
    check_pair(gold, pred)?;
    let (mut correct, mut total) = (0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        let mut p: Vec<&LabeledSpan> = p.iter().collect();
        p.sort_by_key(|s| s.start);
        for gs in g {
            total += 1;
            // first predicted span that could reach into gs
            let from = p.partition_point(|s| s.end <= gs.start);
            let hit = p[from..]
                .iter()
                .take_while(|s| s.start < gs.end)
                .any(|s| s.shares_label(gs));
            if hit {
                correct += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

/// Share of gold tokens with an exactly matching, correctly labelled prediction.
pub fn strict_accuracy(gold: &[Vec<LabeledSpan>], pred: &[Vec<LabeledSpan>]) -> Result<f64, MetricsError> {
    let c = span_counts(gold, pred, true)?;
    Ok(if c.gold == 0 { 0.0 } else { c.matched as f64 / c.gold as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub token_f1: Prf,
    pub joint_f1: Prf,
    pub relaxed_acc: Option<f64>,
    pub n_sentences: usize,
    pub n_gold_tokens: usize,
}

fn check_alignment(gold: &TagDoc, pred: &TagDoc) -> Result<(), MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::SentenceCount {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for (i, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        if g.char_len() != p.char_len() {
            return Err(MetricsError::Misaligned {
                sentence: i,
                gold: g.char_len(),
                pred: p.char_len(),
            });
        }
    }
    Ok(())
}

/// Scores `pred` against `gold`; with `clean_gold`, also the relaxed
/// accuracy against the clean tokens.
pub fn evaluate(gold: &TagDoc, pred: &TagDoc, clean_gold: Option<&TagDoc>) -> Result<EvalReport, MetricsError> {
    check_alignment(gold, pred)?;
    let g: Vec<_> = gold.sentences.iter().map(gold_spans).collect();
    let p: Vec<_> = pred.sentences.iter().map(pred_spans).collect();
    let relaxed_acc = match clean_gold {
        Some(clean) => {
            check_alignment(clean, pred)?;
            let c: Vec<_> = clean.sentences.iter().map(gold_spans).collect();
            Some(relaxed_accuracy(&c, &p)?)
        }
        None => None,
    };
    Ok(EvalReport {
        token_f1: token_f1(&g, &p)?,
        joint_f1: joint_f1(&g, &p)?,
        relaxed_acc,
        n_sentences: gold.len(),
        n_gold_tokens: gold.token_count(),
    })
}
