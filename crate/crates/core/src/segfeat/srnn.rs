use super::{project, stack_rows, SrnnParams};
use crate::encoding::lstm_step;
use crate::numeric::{NumericError, ParamStore, Tape, Var};
use crate::semicrf::LatticeLayout;

/// Segmental RNN features: a bidirectional LSTM run over each segment's
/// character states, final states concatenated and projected.
///
/// All segments of one length advance together. The forward run for
/// `(a, d)` extends the one for `(a, d-1)` by character `a+d-1`; the
/// backward run for `(a, d)` extends the one for `(a+1, d-1)` by
/// character `a`. Each level therefore costs one batched step per
/// direction.
pub fn srnn<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    p: &SrnnParams,
    states: Var,
    layout: LatticeLayout,
) -> Result<Var, NumericError> {
    let t_len = layout.seq_len();
    let xf = p.fwd.input_proj(tape, store, states)?;
    let xb = p.bwd.input_proj(tape, store, states)?;
    let wf = tape.param(store, p.fwd.w_h);
    let wb = tape.param(store, p.bwd.w_h);

    let mut fwd: Option<(Var, Var)> = None;
    let mut bwd: Option<(Var, Var)> = None;
    let mut levels = Vec::with_capacity(layout.levels());
    for k in 0..layout.levels() {
        let n = t_len - k;
        let (fin, fprev) = match fwd {
            None => (xf, None),
            Some((h, c)) => {
                let h = tape.slice_rows(h, 0, n)?;
                let c = tape.slice_rows(c, 0, n)?;
                (tape.slice_rows(xf, k, t_len)?, Some((h, c)))
            }
        };
        let (bin, bprev) = match bwd {
            None => (xb, None),
            Some((h, c)) => {
                let h = tape.slice_rows(h, 1, n + 1)?;
                let c = tape.slice_rows(c, 1, n + 1)?;
                (tape.slice_rows(xb, 0, n)?, Some((h, c)))
            }
        };
        let f = lstm_step(tape, fin, fprev, wf, p.fwd.hidden)?;
        let b = lstm_step(tape, bin, bprev, wb, p.bwd.hidden)?;
        levels.push(tape.concat_cols(&[f.0, b.0])?);
        fwd = Some(f);
        bwd = Some(b);
    }
    let all = stack_rows(tape, &levels)?;
    project(tape, store, all, p.w_p, p.b_p)
}
