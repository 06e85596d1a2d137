use super::{project, stack_rows, GrConvParams, Nonlinearity};
use crate::numeric::{NumericError, ParamStore, Tape, Var};
use crate::semicrf::LatticeLayout;

/// Gated recursive convolution over the segment pyramid.
///
/// Level 1 is the projected character states. Node `k` of level `d`
/// combines children `k` and `k+1` of level `d-1`:
///
/// ```text
/// ẑ = g(z_k·W_L + z_{k+1}·W_R + b_w)
/// (θ_L, θ_M, θ_R) = softmax over blocks of [z_k; z_{k+1}]·U_g + b_g
/// z = θ_L∘z_k + θ_R∘z_{k+1} + θ_M∘ẑ
/// ```
pub fn grconv<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    p: &GrConvParams,
    g: Nonlinearity,
    states: Var,
    layout: LatticeLayout,
) -> Result<Var, NumericError> {
    grconv_with_gates(tape, store, p, g, states, layout).map(|(z, _)| z)
}

/// As [`grconv`], also returning the `n × 3D` gate matrix of each level ≥ 2.
pub fn grconv_with_gates<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    p: &GrConvParams,
    g: Nonlinearity,
    states: Var,
    layout: LatticeLayout,
) -> Result<(Var, Vec<Var>), NumericError> {
    let level1 = project(tape, store, states, p.w_p, p.b_p)?;
    let d_model = tape.value(level1).cols();
    let (w_l, w_r, b_w) = (tape.param(store, p.w_l), tape.param(store, p.w_r), tape.param(store, p.b_w));
    let (u_g, b_g) = (tape.param(store, p.u_g), tape.param(store, p.b_g));

    let mut levels = vec![level1];
    let mut gates = Vec::new();
    for d in 2..=layout.levels() {
        let prev = *levels.last().expect("level 1");
        let n = layout.level_size(d);
        let left = tape.slice_rows(prev, 0, n)?;
        let right = tape.slice_rows(prev, 1, n + 1)?;

        let lr = tape.concat_cols(&[left, right])?;
        let gl = tape.matmul(lr, u_g)?;
        let gl = tape.add_row(gl, b_g)?;
        let theta = tape.group_softmax(gl, 3)?;
        let t_l = tape.slice_cols(theta, 0, d_model)?;
        let t_m = tape.slice_cols(theta, d_model, 2 * d_model)?;
        let t_r = tape.slice_cols(theta, 2 * d_model, 3 * d_model)?;

        let a = tape.matmul(left, w_l)?;
        let b = tape.matmul(right, w_r)?;
        let pre = tape.add(a, b)?;
        let pre = tape.add_row(pre, b_w)?;
        let z_hat = tape.unary(pre, g.into());

        let x = tape.mul(t_l, left)?;
        let y = tape.mul(t_r, right)?;
        let m = tape.mul(t_m, z_hat)?;
        let xy = tape.add(x, y)?;
        levels.push(tape.add(xy, m)?);
        gates.push(theta);
    }
    Ok((stack_rows(tape, &levels)?, gates))
}
