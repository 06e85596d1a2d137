//! Character encoder: extended one-hot input, shared embedding, stacked biLSTM.

mod lstm;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CharSequence;
use crate::numeric::{NumericError, ParamId, ParamStore, Tape, Tensor, Var};

pub use lstm::{lstm_direction, lstm_step, BiLstmLayer, LstmDirection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embed_dim: 60,
            hidden: 100,
            layers: 3,
        }
    }
}

/// Dropout state for a training forward pass.
#[derive(Debug)]
pub struct Dropout {
    /// Probability of zeroing a whole one-hot row.
    pub input_p: f64,
    /// Element-wise dropout on every biLSTM layer output.
    pub layer_p: f64,
    pub rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(input_p: f64, layer_p: f64, rng: ChaCha8Rng) -> Self {
        Dropout { input_p, layer_p, rng }
    }

    /// Inverted-dropout mask with `1/(1-p)` on kept units.
    fn mask(&mut self, rows: usize, cols: usize) -> Tensor {
        let p = self.layer_p;
        let keep = 1.0 / (1.0 - p);
        let data = (0..rows * cols)
            .map(|_| if self.rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        Tensor::new(vec![rows, cols], data).expect("non-empty")
    }
}

/// Encoder parameter handles into a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub vocab_size: usize,
    /// `(|V|+2) × E`; the last two rows are the space-before and
    /// space-after dimensions.
    pub embed: ParamId,
    pub layers: Vec<BiLstmLayer>,
}

impl EncoderParams {
    pub fn new(store: &mut ParamStore, vocab_size: usize, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let embed = store.add_uniform("encoder.embed", &[vocab_size + 2, config.embed_dim], 0.1, rng);
        let layers = (0..config.layers)
            .map(|k| {
                let input = if k == 0 { config.embed_dim } else { 2 * config.hidden };
                BiLstmLayer::new(store, &format!("encoder.l{k}"), input, config.hidden, rng)
            })
            .collect();
        EncoderParams {
            config: config.clone(),
            vocab_size,
            embed,
            layers,
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.config.hidden
    }
}

/// Extended one-hot matrix `T × (|V|+2)`. Rows dropped by input dropout
/// are all zero.
pub fn one_hot(seq: &CharSequence, vocab_size: usize, dropout: Option<&mut Dropout>) -> Tensor {
    let width = vocab_size + 2;
    let mut data = vec![0.0; seq.len() * width];
    let mut dropped = vec![false; seq.len()];
    if let Some(d) = dropout {
        if d.input_p > 0.0 {
            for flag in dropped.iter_mut() {
                *flag = d.rng.gen::<f64>() < d.input_p;
            }
        }
    }
    for t in 0..seq.len() {
        if dropped[t] {
            continue;
        }
        let row = &mut data[t * width..(t + 1) * width];
        if let Some(id) = seq.chars[t] {
            row[id as usize] = 1.0;
        }
        if seq.space_before[t] {
            row[vocab_size] = 1.0;
        }
        if seq.space_after[t] {
            row[vocab_size + 1] = 1.0;
        }
    }
    Tensor::new(vec![seq.len(), width], data).expect("non-empty sequence")
}

/// Embedded characters `T × E`.
pub fn embed<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    params: &EncoderParams,
    seq: &CharSequence,
    dropout: Option<&mut Dropout>,
) -> Result<Var, NumericError> {
    let x = tape.constant(one_hot(seq, params.vocab_size, dropout));
    let e = tape.param(store, params.embed);
    tape.matmul(x, e)
}

/// Runs the biLSTM stack over embedded input, giving `T × 2H` states.
pub fn encode<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    params: &EncoderParams,
    embedded: Var,
    mut dropout: Option<&mut Dropout>,
) -> Result<Var, NumericError> {
    let mut x = embedded;
    for layer in &params.layers {
        x = layer.forward(tape, store, x)?;
        if let Some(d) = dropout.as_deref_mut() {
            if d.layer_p > 0.0 {
                let shape = tape.value(x).shape().to_vec();
                let m = tape.constant(d.mask(shape[0], shape[1]));
                x = tape.mul(x, m)?;
            }
        }
    }
    Ok(x)
}

/// `embed` followed by `encode`.
pub fn char_states<'p>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    params: &EncoderParams,
    seq: &CharSequence,
    mut dropout: Option<&mut Dropout>,
) -> Result<Var, NumericError> {
    let e = embed(tape, store, params, seq, dropout.as_deref_mut())?;
    encode(tape, store, params, e, dropout)
}
