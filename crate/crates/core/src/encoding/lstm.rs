use rand_chacha::ChaCha8Rng;

use crate::numeric::{NumericError, ParamId, ParamStore, Tape, Tensor, Var};

/// One LSTM direction. Gate columns are ordered input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct LstmDirection {
    pub hidden: usize,
    /// `in × 4H`
    pub w_x: ParamId,
    /// `H × 4H`
    pub w_h: ParamId,
    /// `4H`; the forget block starts at 1.0.
    pub b: ParamId,
}

impl LstmDirection {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w_x = store.add_uniform(format!("{name}.w_x"), &[input, 4 * hidden], 0.1, rng);
        let w_h = store.add_uniform(format!("{name}.w_h"), &[hidden, 4 * hidden], 0.1, rng);
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{name}.b"), Tensor::vector(bias));
        LstmDirection { hidden, w_x, w_h, b }
    }

    /// `x·W_x + b` for all rows at once.
    pub fn input_proj<'p>(&self, tape: &mut Tape<'p>, store: &'p ParamStore, x: Var) -> Result<Var, NumericError> {
        let w = tape.param(store, self.w_x);
        let b = tape.param(store, self.b);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }
}

/// One batched LSTM step. `pre_x` is `n × 4H` (already projected input),
/// `prev` the `(h, c)` pair from the previous step, each `n × H`.
pub fn lstm_step(
    tape: &mut Tape<'_>,
    pre_x: Var,
    prev: Option<(Var, Var)>,
    w_h: Var,
    hidden: usize,
) -> Result<(Var, Var), NumericError> {
    let pre = match prev {
        Some((h, _)) => {
            let hw = tape.matmul(h, w_h)?;
            tape.add(pre_x, hw)?
        }
        None => pre_x,
    };
    let s = tape.sigmoid(pre);
    let i = tape.slice_cols(s, 0, hidden)?;
    let o = tape.slice_cols(s, 3 * hidden, 4 * hidden)?;
    let g = tape.slice_cols(pre, 2 * hidden, 3 * hidden)?;
    let g = tape.tanh(g);
    let ig = tape.mul(i, g)?;
    let c = match prev {
        Some((_, c_prev)) => {
            let f = tape.slice_cols(s, hidden, 2 * hidden)?;
            let fc = tape.mul(f, c_prev)?;
            tape.add(fc, ig)?
        }
        None => ig,
    };
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Runs one direction over `T × in` input; returns `T × H` states in
/// position order. With `reverse` the recurrence runs right to left.
pub fn lstm_direction<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    dir: &LstmDirection,
    x: Var,
    reverse: bool,
) -> Result<Var, NumericError> {
    let xw = dir.input_proj(tape, store, x)?;
    let w_h = tape.param(store, dir.w_h);
    let t_len = tape.value(x).rows();
    let mut hs = Vec::with_capacity(t_len);
    let mut prev = None;
    for k in 0..t_len {
        let t = if reverse { t_len - 1 - k } else { k };
        let pre_x = tape.slice_rows(xw, t, t + 1)?;
        let (h, c) = lstm_step(tape, pre_x, prev, w_h, dir.hidden)?;
        hs.push(h);
        prev = Some((h, c));
    }
    if reverse {
        hs.reverse();
    }
    if hs.len() == 1 {
        Ok(hs[0])
    } else {
        tape.concat_rows(&hs)
    }
}

#[derive(Clone, Debug)]
pub struct BiLstmLayer {
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
}

impl BiLstmLayer {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        BiLstmLayer {
            fwd: LstmDirection::new(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: LstmDirection::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    /// `T × in` to `T × 2H`: forward states then backward states.
    pub fn forward<'p>(&self, tape: &mut Tape<'p>, store: &'p ParamStore, x: Var) -> Result<Var, NumericError> {
        let f = lstm_direction(tape, store, &self.fwd, x, false)?;
        let b = lstm_direction(tape, store, &self.bwd, x, true)?;
        tape.concat_cols(&[f, b])
    }
}
