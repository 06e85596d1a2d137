use super::{LatticeLayout, ScoredLattice, Segment, Segmentation, SemiCrfError};
use crate::numeric::{logsumexp, NumericError, Tape, Tensor, Var};

fn check_transitions(shape: &[usize], labels: usize) -> Result<(), SemiCrfError> {
    if shape != [labels + 1, labels] {
        return Err(SemiCrfError::Transitions {
            got: shape.to_vec(),
            labels,
        });
    }
    Ok(())
}

fn check_scores(layout: LatticeLayout, shape: &[usize]) -> Result<usize, SemiCrfError> {
    if shape.len() != 2 || shape[0] != layout.rows() {
        return Err(NumericError::Shape {
            op: "semicrf",
            left: vec![layout.rows()],
            right: shape.to_vec(),
        }
        .into());
    }
    Ok(shape[1])
}

/// Differentiable `log Z`.
///
/// Uses `α(t, y) = logsumexp_d [ m(t-d, y) + F(t-d, d, y) ]` where
/// `m(a, y) = logsumexp_{y'} [ α(a, y') + A(y', y) ]` for `a > 0` and
/// `m(0, y) = A(START, y)`, so the label-pair term is built once per position.
pub fn log_partition_tape(
    tape: &mut Tape<'_>,
    layout: LatticeLayout,
    scores: Var,
    trans: Var,
) -> Result<Var, SemiCrfError> {
    let y = check_scores(layout, tape.value(scores).shape())?;
    check_transitions(tape.value(trans).shape(), y)?;
    let t_len = layout.seq_len();

    // m[a] as 1 × Y rows
    let mut m: Vec<Var> = Vec::with_capacity(t_len);
    m.push(tape.slice_rows(trans, y, y + 1)?);
    let body = tape.slice_rows(trans, 0, y)?;
    let zeros = tape.constant(Tensor::zeros(&[y]));

    let mut alpha = None;
    for t in 1..=t_len {
        let dmax = layout.levels().min(t);
        let rows: Vec<usize> = (1..=dmax)
            .map(|d| layout.index(t - d, d).expect("in lattice"))
            .collect();
        let f = tape.select_rows(scores, &rows)?;
        let inc: Vec<Var> = (1..=dmax).map(|d| m[t - d]).collect();
        let inc = if inc.len() == 1 { inc[0] } else { tape.concat_rows(&inc)? };
        let cand = tape.add(inc, f)?;
        let a_t = tape.logsumexp(cand, 0)?;
        if t < t_len {
            // [i, j] = α(t, i) + A(i, j)
            let spread = tape.outer_add(a_t, zeros);
            let pair = tape.add(spread, body)?;
            let next = tape.logsumexp(pair, 0)?;
            m.push(tape.reshape(next, vec![1, y])?);
        }
        alpha = Some(a_t);
    }
    Ok(tape.logsumexp(alpha.expect("non-empty"), 0)?)
}

fn gold_indices(
    gold: &Segmentation,
    layout: LatticeLayout,
    y: usize,
) -> Result<(Vec<usize>, Vec<usize>), SemiCrfError> {
    gold.validate(layout.seq_len(), layout.max_len(), y)?;
    let mut f_idx = Vec::with_capacity(gold.len());
    let mut a_idx = Vec::with_capacity(gold.len());
    let mut prev = y;
    for s in gold.segments() {
        let row = layout.index(s.start, s.len).expect("validated");
        f_idx.push(row * y + s.label);
        a_idx.push(prev * y + s.label);
        prev = s.label;
    }
    Ok((f_idx, a_idx))
}

/// Differentiable score of a gold segmentation.
pub fn gold_score_tape(
    tape: &mut Tape<'_>,
    layout: LatticeLayout,
    gold: &Segmentation,
    scores: Var,
    trans: Var,
) -> Result<Var, SemiCrfError> {
    let y = check_scores(layout, tape.value(scores).shape())?;
    check_transitions(tape.value(trans).shape(), y)?;
    let (f_idx, a_idx) = gold_indices(gold, layout, y)?;
    let f = tape.gather(scores, &f_idx)?;
    let a = tape.gather(trans, &a_idx)?;
    let (f, a) = (tape.sum(f), tape.sum(a));
    Ok(tape.add(f, a)?)
}

/// `log Z − score(gold)`.
pub fn nll_tape(
    tape: &mut Tape<'_>,
    layout: LatticeLayout,
    gold: &Segmentation,
    scores: Var,
    trans: Var,
) -> Result<Var, SemiCrfError> {
    let z = log_partition_tape(tape, layout, scores, trans)?;
    let g = gold_score_tape(tape, layout, gold, scores, trans)?;
    Ok(tape.sub(z, g)?)
}

fn check_plain(lat: &ScoredLattice, trans: &Tensor) -> Result<usize, SemiCrfError> {
    let y = lat.n_labels();
    check_transitions(trans.shape(), y)?;
    Ok(y)
}

/// Plain forward pass: `(α, m)` as `T+1` rows of `Y` entries each.
/// `α[0]` is unused; `m[a]` is the incoming log-mass for a segment at `a`.
fn forward(lat: &ScoredLattice, trans: &Tensor, y: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let layout = lat.layout();
    let t_len = layout.seq_len();
    let mut alpha = vec![vec![f64::NEG_INFINITY; y]; t_len + 1];
    let mut m = vec![vec![f64::NEG_INFINITY; y]; t_len + 1];
    m[0] = trans.row(y).to_vec();
    let mut buf = Vec::with_capacity(layout.levels().max(y));
    for t in 1..=t_len {
        let dmax = layout.levels().min(t);
        for lab in 0..y {
            buf.clear();
            buf.extend((1..=dmax).map(|d| m[t - d][lab] + lat.get(t - d, d, lab)));
            alpha[t][lab] = logsumexp(&buf);
        }
        if t < t_len {
            for lab in 0..y {
                buf.clear();
                buf.extend((0..y).map(|p| alpha[t][p] + trans.at(p, lab)));
                m[t][lab] = logsumexp(&buf);
            }
        }
    }
    (alpha, m)
}

pub fn log_partition(lat: &ScoredLattice, trans: &Tensor) -> Result<f64, SemiCrfError> {
    let y = check_plain(lat, trans)?;
    let (alpha, _) = forward(lat, trans, y);
    Ok(logsumexp(&alpha[lat.layout().seq_len()]))
}

/// Score of a segmentation, accumulated left to right.
pub fn gold_score(gold: &Segmentation, lat: &ScoredLattice, trans: &Tensor) -> Result<f64, SemiCrfError> {
    let y = check_plain(lat, trans)?;
    let layout = lat.layout();
    gold.validate(layout.seq_len(), layout.max_len(), y)?;
    let mut acc = 0.0;
    let mut prev = y;
    for s in gold.segments() {
        acc += lat.get(s.start, s.len, s.label) + trans.at(prev, s.label);
        prev = s.label;
    }
    Ok(acc)
}

pub fn nll(gold: &Segmentation, lat: &ScoredLattice, trans: &Tensor) -> Result<f64, SemiCrfError> {
    Ok(log_partition(lat, trans)? - gold_score(gold, lat, trans)?)
}

/// Highest-scoring segmentation and its score.
///
/// Ties go to the shorter last segment, then to the smaller previous
/// label; among final labels the smaller one wins.
pub fn viterbi(lat: &ScoredLattice, trans: &Tensor) -> Result<(Segmentation, f64), SemiCrfError> {
    let y = check_plain(lat, trans)?;
    let layout = lat.layout();
    let t_len = layout.seq_len();
    let mut best = vec![vec![f64::NEG_INFINITY; y]; t_len + 1];
    // (length, previous label) of the best last segment ending at t with label y
    let mut back = vec![vec![(0usize, usize::MAX); y]; t_len + 1];
    for t in 1..=t_len {
        for lab in 0..y {
            let (mut v, mut arg) = (f64::NEG_INFINITY, (0, usize::MAX));
            for d in 1..=layout.levels().min(t) {
                let a = t - d;
                let f = lat.get(a, d, lab);
                if a == 0 {
                    let c = 0.0 + (f + trans.at(y, lab));
                    if c > v {
                        (v, arg) = (c, (d, y));
                    }
                } else {
                    for p in 0..y {
                        let c = best[a][p] + (f + trans.at(p, lab));
                        if c > v {
                            (v, arg) = (c, (d, p));
                        }
                    }
                }
            }
            best[t][lab] = v;
            back[t][lab] = arg;
        }
    }
    let mut lab = 0;
    for k in 1..y {
        if best[t_len][k] > best[t_len][lab] {
            lab = k;
        }
    }
    let score = best[t_len][lab];
    if !score.is_finite() {
        return Err(NumericError::Empty("viterbi").into());
    }
    let mut segs = Vec::new();
    let mut t = t_len;
    while t > 0 {
        let (d, p) = back[t][lab];
        segs.push(Segment::new(t - d, d, lab));
        t -= d;
        lab = p;
    }
    segs.reverse();
    Ok((Segmentation::new(segs), score))
}

/// Posterior probability of every lattice entry, `rows × Y`.
pub fn marginals(lat: &ScoredLattice, trans: &Tensor) -> Result<Tensor, SemiCrfError> {
    let y = check_plain(lat, trans)?;
    let layout = lat.layout();
    let t_len = layout.seq_len();
    let (alpha, m) = forward(lat, trans, y);
    let log_z = logsumexp(&alpha[t_len]);

    // beta[t][k]: log-mass of completions after a segment labelled k ends at t
    let mut beta = vec![vec![f64::NEG_INFINITY; y]; t_len + 1];
    beta[t_len] = vec![0.0; y];
    let mut buf = Vec::new();
    for t in (1..t_len).rev() {
        for k in 0..y {
            buf.clear();
            for d in 1..=layout.levels().min(t_len - t) {
                for n in 0..y {
                    buf.push(trans.at(k, n) + lat.get(t, d, n) + beta[t + d][n]);
                }
            }
            beta[t][k] = logsumexp(&buf);
        }
    }

    let mut out = Tensor::zeros(&[layout.rows(), y]);
    let data = out.data_mut();
    for (row, (a, d)) in layout.entries().enumerate() {
        for k in 0..y {
            let lp = m[a][k] + lat.get(a, d, k) + beta[a + d][k] - log_z;
            data[row * y + k] = lp.exp();
        }
    }
    Ok(out)
}
