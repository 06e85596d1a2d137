//! Segment representations `f(a, d) ∈ R^D` for every lattice entry.
//!
//! All featurizers return a `rows × D` matrix in [`LatticeLayout`] order.

mod diff;
mod grconv;
mod srnn;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::LstmDirection;
use crate::numeric::{NumericError, ParamId, ParamStore, Tape, Tensor, Unary, Var};
use crate::semicrf::LatticeLayout;

pub use diff::diff_features;
pub use grconv::{grconv, grconv_with_gates};
pub use srnn::srnn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturizerKind {
    Grconv,
    Srnn,
    Diff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Tanh,
    Relu,
    Sigmoid,
}

impl From<Nonlinearity> for Unary {
    fn from(n: Nonlinearity) -> Unary {
        match n {
            Nonlinearity::Tanh => Unary::Tanh,
            Nonlinearity::Relu => Unary::Relu,
            Nonlinearity::Sigmoid => Unary::Sigmoid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegfeatConfig {
    pub kind: FeaturizerKind,
    /// Segment feature width D.
    pub dim: usize,
    /// grConv combination non-linearity g.
    pub nonlinearity: Nonlinearity,
    /// Per-direction hidden size of the segment LSTM (srnn only).
    pub srnn_hidden: usize,
}

impl Default for SegfeatConfig {
    fn default() -> Self {
        SegfeatConfig {
            kind: FeaturizerKind::Grconv,
            dim: 100,
            nonlinearity: Nonlinearity::Tanh,
            srnn_hidden: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GrConvParams {
    /// Level-1 projection, `in × D` and `D`.
    pub w_p: ParamId,
    pub b_p: ParamId,
    /// Child weights, stored input-major (`D × D`, applied as `z·W`).
    pub w_l: ParamId,
    pub w_r: ParamId,
    pub b_w: ParamId,
    /// Gate weights `2D × 3D` and bias `3D`; output columns are the
    /// blocks θ_L, θ_M, θ_R.
    pub u_g: ParamId,
    pub b_g: ParamId,
}

#[derive(Clone, Debug)]
pub struct SrnnParams {
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
    pub w_p: ParamId,
    pub b_p: ParamId,
}

#[derive(Clone, Debug)]
pub struct DiffParams {
    pub w_p: ParamId,
    pub b_p: ParamId,
}

#[derive(Clone, Debug)]
pub enum Featurizer {
    Grconv(GrConvParams),
    Srnn(SrnnParams),
    Diff(DiffParams),
}

#[derive(Clone, Debug)]
pub struct SegfeatParams {
    pub config: SegfeatConfig,
    pub input_dim: usize,
    pub featurizer: Featurizer,
}

impl SegfeatParams {
    /// Registers parameters for states of width `input_dim` (= 2H).
    pub fn new(store: &mut ParamStore, input_dim: usize, config: &SegfeatConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = config.dim;
        let s = 0.1;
        let featurizer = match config.kind {
            FeaturizerKind::Grconv => Featurizer::Grconv(GrConvParams {
                w_p: store.add_uniform("segfeat.w_p", &[input_dim, d], s, rng),
                b_p: store.add("segfeat.b_p", Tensor::zeros(&[d])),
                w_l: store.add_uniform("segfeat.w_l", &[d, d], s, rng),
                w_r: store.add_uniform("segfeat.w_r", &[d, d], s, rng),
                b_w: store.add("segfeat.b_w", Tensor::zeros(&[d])),
                u_g: store.add_uniform("segfeat.u_g", &[2 * d, 3 * d], s, rng),
                b_g: store.add("segfeat.b_g", Tensor::zeros(&[3 * d])),
            }),
            FeaturizerKind::Srnn => {
                let h = config.srnn_hidden;
                Featurizer::Srnn(SrnnParams {
                    fwd: LstmDirection::new(store, "segfeat.fwd", input_dim, h, rng),
                    bwd: LstmDirection::new(store, "segfeat.bwd", input_dim, h, rng),
                    w_p: store.add_uniform("segfeat.w_p", &[2 * h, d], s, rng),
                    b_p: store.add("segfeat.b_p", Tensor::zeros(&[d])),
                })
            }
            FeaturizerKind::Diff => Featurizer::Diff(DiffParams {
                w_p: store.add_uniform("segfeat.w_p", &[input_dim, d], s, rng),
                b_p: store.add("segfeat.b_p", Tensor::zeros(&[d])),
            }),
        };
        SegfeatParams {
            config: config.clone(),
            input_dim,
            featurizer,
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }
}

/// Features for every entry of `layout` from `T × input_dim` states.
pub fn segment_features<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    params: &SegfeatParams,
    states: Var,
    layout: LatticeLayout,
) -> Result<Var, NumericError> {
    let shape = tape.value(states).shape().to_vec();
    if shape.len() != 2 || shape[0] != layout.seq_len() || shape[1] != params.input_dim {
        return Err(NumericError::Shape {
            op: "segment_features",
            left: vec![layout.seq_len(), params.input_dim],
            right: shape,
        });
    }
    match &params.featurizer {
        Featurizer::Grconv(p) => grconv(tape, store, p, params.config.nonlinearity, states, layout),
        Featurizer::Srnn(p) => srnn(tape, store, p, states, layout),
        Featurizer::Diff(p) => diff_features(tape, store, p, states, layout),
    }
}

fn project<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    x: Var,
    w: ParamId,
    b: ParamId,
) -> Result<Var, NumericError> {
    let (w, b) = (tape.param(store, w), tape.param(store, b));
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

fn stack_rows(tape: &mut Tape<'_>, parts: &[Var]) -> Result<Var, NumericError> {
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        tape.concat_rows(parts)
    }
}
