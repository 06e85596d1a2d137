//! Treebank documents, character sequences and vocabularies.
//!
//! Token spans index the *non-space* characters of a sentence, so a
//! clean sentence and any re-spaced variant of it share one coordinate
//! system.

mod charseq;
mod conllu;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use charseq::{is_space, to_char_sequence, CharSequence};
pub use conllu::{parse_conllu, parse_conllu_str, write_conllu, write_conllu_string};
pub use vocab::{build_vocabs, CharVocab, TagSet};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: alignment error: {message}")]
    Alignment { line: usize, message: String },
    #[error("sentence has no non-space characters")]
    EmptySentence,
    #[error("label {0:?} is not in the tag set")]
    UnknownLabel(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("token {form:?} spans {len} characters, more than the maximum segment length {max}")]
    TokenTooLong { form: String, len: usize, max: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Half-open range `[start, end)` over non-space character positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    /// Label used as the training target.
    pub upos: String,
    /// Labels accepted at evaluation time, sorted and deduplicated.
    /// Holds just `upos` for clean data; merged noisy tokens carry the
    /// union of their source labels.
    pub gold_upos: Vec<String>,
    pub span: Span,
    pub space_after: bool,
}

impl Token {
    /// A clean token with a space after it. The span is filled in by
    /// [`Sentence::assemble`].
    pub fn new(form: impl Into<String>, upos: impl Into<String>) -> Self {
        let upos = upos.into();
        Token {
            form: form.into(),
            gold_upos: vec![upos.clone()],
            upos,
            span: Span::new(0, 0),
            space_after: true,
        }
    }

    pub fn no_space_after(mut self) -> Self {
        self.space_after = false;
        self
    }

    pub fn accepts(&self, label: &str) -> bool {
        self.gold_upos.iter().any(|l| l == label)
    }

    /// Number of non-space characters in the form.
    pub fn char_len(&self) -> usize {
        self.form.chars().filter(|c| !is_space(*c)).count()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    pub id: Option<String>,
    /// Surface text rebuilt from the token forms and their spacing.
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Computes spans and surface text from token forms and spacing.
    pub fn assemble(id: Option<String>, mut tokens: Vec<Token>) -> Result<Self, CorpusError> {
        let mut pos = 0;
        let mut text = String::new();
        let n = tokens.len();
        for (i, tok) in tokens.iter_mut().enumerate() {
            let len = tok.char_len();
            if len == 0 {
                return Err(CorpusError::Alignment {
                    line: 0,
                    message: format!("token {} has no non-space characters", i + 1),
                });
            }
            tok.span = Span::new(pos, pos + len);
            pos += len;
            text.push_str(&tok.form);
            if tok.space_after && i + 1 < n {
                text.push(' ');
            }
            if tok.gold_upos.is_empty() {
                tok.gold_upos.push(tok.upos.clone());
            }
            tok.gold_upos.sort();
            tok.gold_upos.dedup();
        }
        Ok(Sentence { id, text, tokens })
    }

    /// Number of non-space characters.
    pub fn char_len(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.span.end)
    }

    /// The non-space characters of the sentence, in order.
    pub fn non_space_chars(&self) -> Vec<char> {
        self.text.chars().filter(|c| !is_space(*c)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagDoc {
    pub sentences: Vec<Sentence>,
}

impl TagDoc {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        TagDoc { sentences }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }
}
