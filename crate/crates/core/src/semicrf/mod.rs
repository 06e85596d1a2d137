//! First-order semi-Markov CRF over character segments.
//!
//! A segmentation `s = (s_1, …, s_n)` with `s_j = ⟨a_j, d_j, y_j⟩` tiles
//! the character sequence. Its score is
//!
//! ```text
//! Σ_j F(a_j, d_j, y_j) + A(y_{j-1}, y_j),    y_0 = START
//! ```
//!
//! where `F` comes from a [`ScoredLattice`] and `A` is an
//! `(|Y|+1) × |Y|` transition matrix whose last row holds the START
//! transitions. There is no end-of-sequence transition.

mod dp;
mod lattice;

use thiserror::Error;

use crate::numeric::NumericError;

pub use dp::{
    gold_score, gold_score_tape, log_partition, log_partition_tape, marginals, nll, nll_tape,
    viterbi,
};
pub use lattice::{score_lattice, score_lattice_tape, LatticeLayout, ScoredLattice};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiCrfError {
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("transition matrix has shape {got:?}, expected [{}, {}]", .labels + 1, .labels)]
    Transitions { got: Vec<usize>, labels: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// One labelled segment: `len` characters starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub label: usize,
}

impl Segment {
    pub fn new(start: usize, len: usize, label: usize) -> Self {
        Segment { start, len, label }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Ordered segments; a valid segmentation tiles `0..T` contiguously.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Segmentation(Vec<Segment>);

impl Segmentation {
    pub fn new(segments: Vec<Segment>) -> Self {
        Segmentation(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.0.iter().map(|s| s.len).sum()
    }

    pub fn longest(&self) -> usize {
        self.0.iter().map(|s| s.len).max().unwrap_or(0)
    }

    /// Checks contiguity, coverage of `0..len`, the length bound and labels.
    pub fn validate(&self, len: usize, max_len: usize, n_labels: usize) -> Result<(), SemiCrfError> {
        let bad = |m: String| Err(SemiCrfError::InvalidSegmentation(m));
        if self.0.is_empty() {
            return bad("no segments".into());
        }
        let mut pos = 0;
        for (j, s) in self.0.iter().enumerate() {
            if s.start != pos {
                return bad(format!("segment {j} starts at {} but {pos} was expected", s.start));
            }
            if s.len == 0 || s.len > max_len {
                return bad(format!("segment {j} has length {} (maximum {max_len})", s.len));
            }
            if s.label >= n_labels {
                return bad(format!("segment {j} has label {} of {n_labels}", s.label));
            }
            pos += s.len;
        }
        if pos != len {
            return bad(format!("segments cover {pos} characters, sequence has {len}"));
        }
        Ok(())
    }
}

impl FromIterator<Segment> for Segmentation {
    fn from_iter<I: IntoIterator<Item = Segment>>(iter: I) -> Self {
        Segmentation(iter.into_iter().collect())
    }
}
