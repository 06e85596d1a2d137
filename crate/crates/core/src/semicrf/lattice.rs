use super::SemiCrfError;
use crate::numeric::{NumericError, Tape, Tensor, Var};

/// Index map for the candidate segments of a length-`len` sequence.
///
/// Segments are stored level by level: all length-1 segments by start,
/// then all length-2 segments, and so on up to `min(max_len, len)`.
/// Entry `(a, d)` exists iff `a + d ≤ len` and `d ≤ max_len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeLayout {
    len: usize,
    max_len: usize,
}

impl LatticeLayout {
    pub fn new(len: usize, max_len: usize) -> Self {
        assert!(len >= 1 && max_len >= 1, "empty lattice");
        LatticeLayout { len, max_len }
    }

    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Number of levels, i.e. the longest representable segment.
    pub fn levels(&self) -> usize {
        self.max_len.min(self.len)
    }

    /// Number of segments of length `d`.
    pub fn level_size(&self, d: usize) -> usize {
        self.len + 1 - d
    }

    pub fn level_offset(&self, d: usize) -> usize {
        // Σ_{k<d} (len + 1 - k)
        (d - 1) * (self.len + 1) - (d - 1) * d / 2
    }

    pub fn rows(&self) -> usize {
        self.level_offset(self.levels() + 1)
    }

    pub fn contains(&self, start: usize, len: usize) -> bool {
        len >= 1 && len <= self.levels() && start + len <= self.len
    }

    pub fn index(&self, start: usize, len: usize) -> Option<usize> {
        self.contains(start, len)
            .then(|| self.level_offset(len) + start)
    }

    /// All `(start, len)` pairs in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.levels()).flat_map(move |d| (0..self.level_size(d)).map(move |a| (a, d)))
    }
}

/// Segment scores `F(a, d, y)` stored as a `rows × labels` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredLattice {
    layout: LatticeLayout,
    scores: Tensor,
}

impl ScoredLattice {
    pub fn new(layout: LatticeLayout, scores: Tensor) -> Result<Self, SemiCrfError> {
        if scores.shape().len() != 2 || scores.shape()[0] != layout.rows() {
            return Err(NumericError::Shape {
                op: "lattice",
                left: vec![layout.rows()],
                right: scores.shape().to_vec(),
            }
            .into());
        }
        Ok(ScoredLattice { layout, scores })
    }

    pub fn layout(&self) -> LatticeLayout {
        self.layout
    }

    pub fn n_labels(&self) -> usize {
        self.scores.shape()[1]
    }

    pub fn scores(&self) -> &Tensor {
        &self.scores
    }

    pub fn scores_mut(&mut self) -> &mut Tensor {
        &mut self.scores
    }

    /// Score of `⟨start, len, label⟩`. Panics if the segment is not in the lattice.
    pub fn get(&self, start: usize, len: usize, label: usize) -> f64 {
        let row = self.layout.index(start, len).expect("segment outside lattice");
        self.scores.at(row, label)
    }

    pub fn set(&mut self, start: usize, len: usize, label: usize, v: f64) {
        let row = self.layout.index(start, len).expect("segment outside lattice");
        let n = self.n_labels();
        self.scores.data_mut()[row * n + label] = v;
    }
}

/// `F = features · Wᵀ + b` for every lattice row.
pub fn score_lattice(
    layout: LatticeLayout,
    features: &Tensor,
    w: &Tensor,
    b: &Tensor,
) -> Result<ScoredLattice, SemiCrfError> {
    let mut tape = Tape::new();
    let (f, wv, bv) = (
        tape.constant(features.clone()),
        tape.constant(w.clone()),
        tape.constant(b.clone()),
    );
    let s = score_lattice_tape(&mut tape, f, wv, bv)?;
    ScoredLattice::new(layout, tape.value(s).clone())
}

/// Differentiable lattice scoring; `w` is `|Y| × D`, `b` has `|Y|` entries.
pub fn score_lattice_tape(tape: &mut Tape<'_>, features: Var, w: Var, b: Var) -> Result<Var, SemiCrfError> {
    let fw = tape.value(features).shape().get(1).copied();
    let ww = tape.value(w).shape().get(1).copied();
    if fw != ww || fw.is_none() {
        return Err(NumericError::Shape {
            op: "score_lattice",
            left: tape.value(features).shape().to_vec(),
            right: tape.value(w).shape().to_vec(),
        }
        .into());
    }
    let wt = tape.transpose(w)?;
    let raw = tape.matmul(features, wt)?;
    Ok(tape.add_row(raw, b)?)
}
