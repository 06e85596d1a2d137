//! Scalar re-implementations of the segment featurizers.

use chartag::encoding::LstmDirection;
use chartag::numeric::{sigmoid, ParamStore, Tensor};
use chartag::segfeat::{GrConvParams, SrnnParams};

fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|j| (0..w.rows()).map(|k| x[k] * w.at(k, j)).sum())
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// grConv pyramid node by node; `levels[d-1][a]` is segment `(a, d)`.
pub fn naive_grconv(store: &ParamStore, g: &GrConvParams, x: &Tensor, max_len: usize) -> Vec<Vec<Vec<f64>>> {
    let t = x.rows();
    let w_p = store.get(g.w_p);
    let dm = w_p.cols();
    let mut levels: Vec<Vec<Vec<f64>>> = vec![(0..t)
        .map(|i| add(&vec_mat(x.row(i), w_p), store.get(g.b_p).data()))
        .collect()];
    for d in 2..=max_len.min(t) {
        let prev = &levels[d - 2];
        let mut cur = Vec::new();
        for k in 0..=t - d {
            let (l, r) = (&prev[k], &prev[k + 1]);
            let lr: Vec<f64> = l.iter().chain(r.iter()).cloned().collect();
            let gl = add(&vec_mat(&lr, store.get(g.u_g)), store.get(g.b_g).data());
            let zh: Vec<f64> = add(
                &add(&vec_mat(l, store.get(g.w_l)), &vec_mat(r, store.get(g.w_r))),
                store.get(g.b_w).data(),
            )
            .iter()
            .map(|v| v.tanh())
            .collect();
            let node = (0..dm)
                .map(|j| {
                    let e = [gl[j], gl[dm + j], gl[2 * dm + j]];
                    let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let ex: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
                    let s: f64 = ex.iter().sum();
                    (ex[0] * l[j] + ex[2] * r[j] + ex[1] * zh[j]) / s
                })
                .collect();
            cur.push(node);
        }
        levels.push(cur);
    }
    levels
}

/// One LSTM direction over `rows` from scratch, accumulating in the same
/// order as the batched implementation.
fn scratch_lstm(store: &ParamStore, dir: &LstmDirection, rows: &[&[f64]]) -> Vec<f64> {
    let (wx, wh, b) = (store.get(dir.w_x), store.get(dir.w_h), store.get(dir.b));
    let hn = dir.hidden;
    let mut state: Option<(Vec<f64>, Vec<f64>)> = None;
    for x in rows {
        let mut pre = vec![0.0; 4 * hn];
        for (j, p) in pre.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, xv) in x.iter().enumerate() {
                s += xv * wx.at(k, j);
            }
            s += b.data()[j];
            if let Some((h, _)) = &state {
                let mut hs = 0.0;
                for (k, hv) in h.iter().enumerate() {
                    hs += hv * wh.at(k, j);
                }
                s += hs;
            }
            *p = s;
        }
        let mut h = vec![0.0; hn];
        let mut c = vec![0.0; hn];
        for j in 0..hn {
            let i = sigmoid(pre[j]);
            let o = sigmoid(pre[3 * hn + j]);
            let g = pre[2 * hn + j].tanh();
            c[j] = match &state {
                Some((_, cp)) => sigmoid(pre[hn + j]) * cp[j] + i * g,
                None => i * g,
            };
            h[j] = o * c[j].tanh();
        }
        state = Some((h, c));
    }
    state.expect("non-empty segment").0
}

/// Segment `(a, d)` by running both directions over exactly its rows.
pub fn scratch_srnn(store: &ParamStore, s: &SrnnParams, x: &Tensor, a: usize, d: usize) -> Vec<f64> {
    let fwd_rows: Vec<&[f64]> = (a..a + d).map(|i| x.row(i)).collect();
    let bwd_rows: Vec<&[f64]> = (a..a + d).rev().map(|i| x.row(i)).collect();
    let mut cat = scratch_lstm(store, &s.fwd, &fwd_rows);
    cat.extend(scratch_lstm(store, &s.bwd, &bwd_rows));
    let w = store.get(s.w_p);
    (0..w.cols())
        .map(|j| {
            let mut acc = 0.0;
            for (k, v) in cat.iter().enumerate() {
                acc += v * w.at(k, j);
            }
            acc + store.get(s.b_p).data()[j]
        })
        .collect()
}

/// Hidden-state differences for `(a, d)` read straight off `x`, whose
/// first half of columns is the forward direction: `[h→(a+d-1) - h→(a-1) ;
/// h←(a) - h←(a+d)]` with zero states outside the sequence.
pub fn diff_by_index(x: &Tensor, a: usize, d: usize) -> Vec<f64> {
    let (t, w) = (x.rows(), x.cols());
    let half = w / 2;
    let fwd = |i: Option<usize>, k: usize| i.map_or(0.0, |i| x.at(i, k));
    let bwd = |i: usize, k: usize| if i >= t { 0.0 } else { x.at(i, half + k) };
    let mut out = Vec::with_capacity(w);
    for k in 0..half {
        out.push(fwd(Some(a + d - 1), k) - fwd(a.checked_sub(1), k));
    }
    for k in 0..half {
        out.push(bwd(a, k) - bwd(a + d, k));
    }
    out
}
