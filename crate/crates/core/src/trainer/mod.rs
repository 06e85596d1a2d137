//! Mini-batch training with Adam and early stopping on dev joint F1.

mod adam;
mod checkpoint;
mod config;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointError, FORMAT_VERSION};
pub use config::{ConfigError, NoiseConfig, RunConfig, TrainConfig};

use crate::corpus::{build_vocabs, to_char_sequence, CharSequence, CharVocab, CorpusError, TagDoc, TagSet};
use crate::encoding::Dropout;
use crate::metrics::{evaluate, EvalReport, MetricsError};
use crate::model::{ModelError, TaggerModel};
use crate::numeric::{ParamGrads, Tape};
use crate::semicrf::Segmentation;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no usable training sentences")]
    NoData,
    #[error("non-finite loss at epoch {epoch}, batch {batch} (gradient norm {grad_norm})")]
    NonFinite { epoch: usize, batch: usize, grad_norm: f64 },
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sentence negative log-likelihood.
    pub train_nll: f64,
    pub dev_token_f1: f64,
    pub dev_joint_f1: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best dev epoch.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Training sentences skipped because a token exceeds the maximum
    /// segment length.
    pub skipped: usize,
}

/// Training examples in model coordinates.
pub struct Examples {
    pub items: Vec<(CharSequence, Segmentation)>,
    pub skipped: usize,
}

/// Converts a document to (sequence, gold) pairs, skipping sentences
/// with tokens longer than `max_len`.
pub fn prepare(doc: &TagDoc, vocab: &CharVocab, tags: &TagSet, max_len: usize) -> Result<Examples, CorpusError> {
    let mut items = Vec::with_capacity(doc.len());
    let mut skipped = 0;
    for (i, s) in doc.sentences.iter().enumerate() {
        if let Some(t) = s.tokens.iter().find(|t| t.char_len() > max_len) {
            log::warn!(
                "skipping sentence {}: {}",
                i + 1,
                CorpusError::TokenTooLong {
                    form: t.form.clone(),
                    len: t.char_len(),
                    max: max_len
                }
            );
            skipped += 1;
            continue;
        }
        items.push(to_char_sequence(s, vocab, tags)?);
    }
    Ok(Examples { items, skipped })
}

/// Tags every sentence of `doc` from its surface text.
pub fn tag_doc(model: &TaggerModel, doc: &TagDoc) -> Result<TagDoc, ModelError> {
    let mut out = Vec::with_capacity(doc.len());
    for s in &doc.sentences {
        if let Some(p) = model.tag_sentence(s.id.clone(), &s.text)? {
            out.push(p);
        }
    }
    Ok(TagDoc::new(out))
}

/// Tags `gold`'s text and scores the result against it.
pub fn evaluate_model(model: &TaggerModel, gold: &TagDoc) -> Result<EvalReport, TrainError> {
    let pred = tag_doc(model, gold)?;
    Ok(evaluate(gold, &pred, None)?)
}

/// Gradient of the summed loss over `batch`, with the summed loss.
fn batch_gradient(
    model: &TaggerModel,
    batch: &[(usize, &(CharSequence, Segmentation))],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(ParamGrads, f64), ModelError> {
    let mut total = ParamGrads::zeros_like(&model.store);
    let mut loss_sum = 0.0;
    let input_p = cfg.effective_input_dropout();
    for &(idx, (seq, gold)) in batch {
        let mut dropout = (input_p > 0.0 || cfg.dropout > 0.0).then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1 + epoch as u64));
            rng.set_stream(idx as u64);
            Dropout::new(input_p, cfg.dropout, rng)
        });
        let mut tape = Tape::new();
        let loss = model.loss(&mut tape, seq, gold, dropout.as_mut())?;
        loss_sum += tape.value(loss).item();
        let g = tape.backward_params(loss, &model.store).map_err(ModelError::from)?;
        total.add_assign(&g);
    }
    Ok((total, loss_sum))
}

/// Trains a fresh model on `train`, selecting the epoch with the best
/// dev joint F1. `on_epoch` sees every log line as it is produced.
pub fn train(
    train: &TagDoc,
    dev: &TagDoc,
    cfg: &RunConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let tc = &cfg.train;
    let (vocab, tags) = build_vocabs(train)?;
    let examples = prepare(train, &vocab, &tags, cfg.model.max_len)?;
    if examples.items.is_empty() {
        return Err(TrainError::NoData);
    }
    let mut model = TaggerModel::new(cfg.model.clone(), cfg.segfeat.clone(), vocab, tags, tc.seed);
    let mut adam = Adam::new(&model.store, tc.lr, tc.beta1, tc.beta2, tc.adam_eps);
    let mut order: Vec<usize> = (0..examples.items.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tc.seed);

    let mut best: Option<(f64, usize, TaggerModel)> = None;
    let mut since_best = 0;
    let mut log = Vec::new();
    for epoch in 1..=tc.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut nll = 0.0;
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| (i, &examples.items[i])).collect();
            let (mut grads, loss) = batch_gradient(&model, &batch, tc, epoch)?;
            grads.scale(1.0 / batch.len() as f64);
            let norm = grads.l2_norm();
            if !loss.is_finite() || !norm.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b + 1,
                    grad_norm: norm,
                });
            }
            if let Some(c) = tc.clip_norm {
                if norm > c {
                    grads.scale(c / norm);
                }
            }
            adam.step(&mut model.store, &grads);
            nll += loss;
        }
        let report = evaluate_model(&model, dev)?;
        let entry = EpochLog {
            epoch,
            train_nll: nll / examples.items.len() as f64,
            dev_token_f1: report.token_f1.f1,
            dev_joint_f1: report.joint_f1.f1,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);

        let improved = best.as_ref().map_or(true, |(f, _, _)| report.joint_f1.f1 > *f);
        if improved {
            best = Some((report.joint_f1.f1, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if epoch >= tc.min_epochs && since_best >= tc.patience {
            break;
        }
    }
    let (best_f1, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model: best_model,
            config: cfg.clone(),
            best_dev_joint_f1: best_f1,
            epoch: best_epoch,
        },
        log,
        skipped: examples.skipped,
    })
}
