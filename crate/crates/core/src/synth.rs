//! A small English-like treebank generator for experiments without
//! real treebanks.
//!
//! Sentences come from a toy phrase grammar over UPOS tags. Several
//! word forms belong to more than one tag, punctuation and the clitic
//! `n't` attach without a space, so both segmentation and tagging need
//! context.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Sentence, TagDoc, Token};

const DET: &[&str] = &["the", "a", "this", "that", "every", "some"];
const ADJ: &[&str] = &["big", "small", "red", "quick", "old", "happy", "dark", "long"];
const NOUN: &[&str] = &[
    "fox", "rabbit", "dog", "house", "river", "run", "walk", "play", "book", "tree", "can", "light", "park", "garden",
];
const PROPN: &[&str] = &["Anna", "Paris", "Tom", "Berlin", "Maria"];
const PRON: &[&str] = &["he", "she", "they", "it", "that", "we"];
const VERB: &[&str] = &[
    "chased", "saw", "run", "walk", "play", "likes", "reads", "light", "found", "built", "watched", "like",
];
const AUX: &[&str] = &["can", "will", "does", "did", "is"];
const ADV: &[&str] = &["quickly", "often", "never", "slowly", "there"];
const ADP: &[&str] = &["in", "near", "over", "with", "like", "to"];
const CCONJ: &[&str] = &["and", "but", "or"];

struct Builder<'r> {
    rng: &'r mut ChaCha8Rng,
    tokens: Vec<Token>,
}

impl Builder<'_> {
    fn word(&mut self, tag: &str, list: &[&str]) {
        let w = *list.choose(self.rng).expect("non-empty word list");
        self.tokens.push(Token::new(w, tag));
    }

    /// Attaches a token to the previous one with no space in between.
    fn attached(&mut self, form: &str, tag: &str) {
        if let Some(prev) = self.tokens.last_mut() {
            prev.space_after = false;
        }
        self.tokens.push(Token::new(form, tag));
    }

    fn noun_phrase(&mut self) {
        match self.rng.gen_range(0..10) {
            0..=5 => {
                self.word("DET", DET);
                if self.rng.gen_bool(0.4) {
                    self.word("ADJ", ADJ);
                }
                self.word("NOUN", NOUN);
            }
            6..=7 => self.word("PROPN", PROPN),
            _ => self.word("PRON", PRON),
        }
    }

    fn verb_phrase(&mut self) {
        match self.rng.gen_range(0..10) {
            0..=4 => {
                self.word("VERB", VERB);
                self.noun_phrase();
            }
            5..=6 => {
                self.word("AUX", AUX);
                if self.rng.gen_bool(0.3) {
                    self.attached("n't", "PART");
                }
                self.word("VERB", VERB);
            }
            _ => {
                self.word("VERB", VERB);
                self.word("ADV", ADV);
            }
        }
        if self.rng.gen_bool(0.3) {
            self.word("ADP", ADP);
            self.noun_phrase();
        }
    }

    fn clause(&mut self) {
        self.noun_phrase();
        self.verb_phrase();
    }
}

/// One random sentence.
pub fn sentence(rng: &mut ChaCha8Rng, id: Option<String>) -> Sentence {
    let mut b = Builder { rng, tokens: Vec::new() };
    b.clause();
    if b.rng.gen_bool(0.25) {
        b.attached(",", "PUNCT");
        b.word("CCONJ", CCONJ);
        b.clause();
    }
    b.attached(".", "PUNCT");
    Sentence::assemble(id, b.tokens).expect("generated tokens are non-empty")
}

/// `n` sentences from a fixed seed, with ids `{prefix}-{k}`.
pub fn generate(n: usize, seed: u64, prefix: &str) -> TagDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TagDoc::new(
        (0..n)
            .map(|k| sentence(&mut rng, Some(format!("{prefix}-{}", k + 1))))
            .collect(),
    )
}
