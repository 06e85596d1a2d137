use super::{project, stack_rows, DiffParams};
use crate::numeric::{NumericError, ParamStore, Tape, Tensor, Var};
use crate::semicrf::LatticeLayout;

/// Hidden-state differences: for segment `(a, d)` the row
/// `[h_fwd(a+d-1) - h_fwd(a-1) ; h_bwd(a) - h_bwd(a+d)]`, with zero
/// states outside the sequence, projected to D. The first half of the
/// state columns is the forward direction.
pub fn diff_features<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    p: &DiffParams,
    states: Var,
    layout: LatticeLayout,
) -> Result<Var, NumericError> {
    let t_len = layout.seq_len();
    let width = tape.value(states).cols();
    let h = width / 2;
    let hf = tape.slice_cols(states, 0, h)?;
    let hb = tape.slice_cols(states, h, width)?;
    let zero = tape.constant(Tensor::zeros(&[1, h]));
    // fpad[i] = h_fwd(i-1), bpad[i] = h_bwd(i)
    let fpad = tape.concat_rows(&[zero, hf])?;
    let bpad = tape.concat_rows(&[hb, zero])?;

    let mut levels = Vec::with_capacity(layout.levels());
    for d in 1..=layout.levels() {
        let n = t_len + 1 - d;
        let f_end = tape.slice_rows(fpad, d, t_len + 1)?;
        let f_start = tape.slice_rows(fpad, 0, n)?;
        let b_start = tape.slice_rows(bpad, 0, n)?;
        let b_end = tape.slice_rows(bpad, d, t_len + 1)?;
        let f = tape.sub(f_end, f_start)?;
        let b = tape.sub(b_start, b_end)?;
        levels.push(tape.concat_cols(&[f, b])?);
    }
    let all = stack_rows(tape, &levels)?;
    project(tape, store, all, p.w_p, p.b_p)
}
