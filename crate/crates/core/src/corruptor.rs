//! Tokenization noise: random space deletion and insertion.
//!
//! For each token, the space after it is deleted with probability `p_d`
//! (merging it with the next token). Tokens that keep their space and
//! have at least two characters instead get one space inserted at a
//! uniformly chosen internal gap with probability `p_i`. Split pieces
//! keep the original label; merged tokens accept the union of the
//! merged labels and train on one of them drawn uniformly.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{is_space, CharSequence, CharVocab, CorpusError, Sentence, TagDoc, Token};

#[derive(Debug, Error)]
pub enum CorruptError {
    #[error("{name} must lie in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("unknown noise level {0:?} (expected low, mid or high)")]
    Level(String),
    #[error("sentence {sentence}: non-space characters differ between the documents")]
    Characters { sentence: usize },
    #[error("documents have {clean} and {noisy} sentences")]
    SentenceCount { clean: usize, noisy: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    Low,
    Mid,
    High,
}

impl NoiseLevel {
    /// `(p_d, p_i)` of the preset.
    pub fn probabilities(self) -> (f64, f64) {
        match self {
            NoiseLevel::Low => (0.1, 0.05),
            NoiseLevel::Mid => (0.3, 0.11),
            NoiseLevel::High => (0.6, 0.33),
        }
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseLevel::Low => "low",
            NoiseLevel::Mid => "mid",
            NoiseLevel::High => "high",
        })
    }
}

impl FromStr for NoiseLevel {
    type Err = CorruptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(NoiseLevel::Low),
            "mid" => Ok(NoiseLevel::Mid),
            "high" => Ok(NoiseLevel::High),
            _ => Err(CorruptError::Level(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p_d: f64,
    pub p_i: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(p_d: f64, p_i: f64, seed: u64) -> Result<Self, CorruptError> {
        let spec = NoiseSpec { p_d, p_i, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_level(level: NoiseLevel, seed: u64) -> Self {
        let (p_d, p_i) = level.probabilities();
        NoiseSpec { p_d, p_i, seed }
    }

    pub fn validate(&self) -> Result<(), CorruptError> {
        for (name, value) in [("p_d", self.p_d), ("p_i", self.p_i)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(CorruptError::Probability { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseCounts {
    pub deletions: usize,
    pub insertions: usize,
}

/// JSON summary written next to a corrupted corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub level: Option<NoiseLevel>,
    pub p_d: f64,
    pub p_i: f64,
    pub deletions: usize,
    pub insertions: usize,
    pub seed: u64,
}

impl NoiseStats {
    pub fn new(level: Option<NoiseLevel>, spec: &NoiseSpec, counts: NoiseCounts) -> Self {
        NoiseStats {
            level,
            p_d: spec.p_d,
            p_i: spec.p_i,
            deletions: counts.deletions,
            insertions: counts.insertions,
            seed: spec.seed,
        }
    }
}

/// Random stream for one sentence: independent of how many sentences
/// come before it.
pub fn sentence_rng(seed: u64, sentence: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sentence as u64);
    rng
}

struct Piece {
    form: String,
    labels: BTreeSet<String>,
    space_after: bool,
}

/// Splits `form` after its `k`-th non-space character.
fn split_form(form: &str, k: usize) -> (String, String) {
    let mut seen = 0;
    for (i, c) in form.char_indices() {
        if !is_space(c) {
            if seen == k {
                return (form[..i].to_string(), form[i..].to_string());
            }
            seen += 1;
        }
    }
    (form.to_string(), String::new())
}

fn corrupt_sentence(s: &Sentence, spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Result<Sentence, CorpusError> {
    let n = s.tokens.len();
    let mut out: Vec<Piece> = Vec::with_capacity(n + 4);
    let mut join_next = false;
    for (i, tok) in s.tokens.iter().enumerate() {
        let labels: BTreeSet<String> = tok.gold_upos.iter().cloned().chain([tok.upos.clone()]).collect();
        let mut pieces = vec![tok.form.clone()];
        let mut delete = false;
        if tok.space_after && i + 1 < n && rng.gen_bool(spec.p_d) {
            delete = true;
        } else {
            let len = tok.char_len();
            if len >= 2 && rng.gen_bool(spec.p_i) {
                let gap = rng.gen_range(1..len);
                let (a, b) = split_form(&tok.form, gap);
                pieces = vec![a, b];
            }
        }
        let last = pieces.len() - 1;
        for (k, form) in pieces.into_iter().enumerate() {
            let space_after = if k < last { true } else { tok.space_after && !delete };
            if k == 0 && join_next {
                let prev = out.last_mut().expect("a token precedes a deleted space");
                prev.form.push_str(&form);
                prev.labels.extend(labels.iter().cloned());
                prev.space_after = space_after;
            } else {
                out.push(Piece {
                    form,
                    labels: labels.clone(),
                    space_after,
                });
            }
        }
        join_next = delete;
    }
    let tokens = out
        .into_iter()
        .map(|p| {
            let labels: Vec<String> = p.labels.into_iter().collect();
            let upos = if labels.len() == 1 {
                labels[0].clone()
            } else {
                labels[rng.gen_range(0..labels.len())].clone()
            };
            let mut t = Token::new(p.form, upos);
            t.gold_upos = labels;
            t.space_after = p.space_after;
            t
        })
        .collect();
    Sentence::assemble(s.id.clone(), tokens)
}

/// Corrupts every sentence with its own random stream.
pub fn corrupt(doc: &TagDoc, spec: &NoiseSpec) -> Result<TagDoc, CorruptError> {
    spec.validate()?;
    let sentences = doc
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| corrupt_sentence(s, spec, &mut sentence_rng(spec.seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TagDoc::new(sentences))
}

/// Spaces removed and added between consecutive non-space characters.
pub fn noise_report(clean: &TagDoc, noisy: &TagDoc) -> Result<NoiseCounts, CorruptError> {
    if clean.len() != noisy.len() {
        return Err(CorruptError::SentenceCount {
            clean: clean.len(),
            noisy: noisy.len(),
        });
    }
    let vocab = CharVocab::default();
    let mut counts = NoiseCounts::default();
    for (i, (c, n)) in clean.sentences.iter().zip(&noisy.sentences).enumerate() {
        let (cs, ns) = match (CharSequence::from_text(&c.text, &vocab), CharSequence::from_text(&n.text, &vocab)) {
            (Some(a), Some(b)) => (a, b),
            (None, None) => continue,
            _ => return Err(CorruptError::Characters { sentence: i }),
        };
        if cs.surface != ns.surface {
            return Err(CorruptError::Characters { sentence: i });
        }
        for (a, b) in cs.space_after.iter().zip(&ns.space_after) {
            match (a, b) {
                (true, false) => counts.deletions += 1,
                (false, true) => counts.insertions += 1,
                _ => {}
            }
        }
    }
    Ok(counts)
}
