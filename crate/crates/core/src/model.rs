//! The full tagger: encoder, segment featurizer and semi-CRF layer.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CharSequence, CharVocab, CorpusError, Sentence, TagSet, Token};
use crate::encoding::{char_states, Dropout, EncoderConfig, EncoderParams};
use crate::numeric::{NumericError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::segfeat::{segment_features, SegfeatConfig, SegfeatParams};
use crate::semicrf::{
    nll_tape, score_lattice_tape, viterbi, LatticeLayout, ScoredLattice, SemiCrfError, Segmentation,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    SemiCrf(#[from] SemiCrfError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Character embedding width E.
    pub embed_dim: usize,
    /// Hidden units per LSTM direction H.
    pub hidden: usize,
    pub layers: usize,
    /// Maximum segment length L.
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 60,
            hidden: 100,
            layers: 3,
            max_len: 23,
        }
    }
}

impl ModelConfig {
    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            layers: self.layers,
        }
    }
}

/// A predicted token: the segment, its surface form and label. Forms of
/// segments that cross a space keep that space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Predicted {
    pub start: usize,
    pub len: usize,
    pub form: String,
    pub label: String,
    pub space_after: bool,
}

#[derive(Clone, Debug)]
pub struct TaggerModel {
    pub config: ModelConfig,
    pub segfeat_config: SegfeatConfig,
    pub vocab: CharVocab,
    pub tags: TagSet,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub segfeat: SegfeatParams,
    /// `|Y| × D`
    pub crf_w: ParamId,
    pub crf_b: ParamId,
    /// `(|Y|+1) × |Y|`, last row for START.
    pub trans: ParamId,
}

impl TaggerModel {
    pub fn new(config: ModelConfig, segfeat_config: SegfeatConfig, vocab: CharVocab, tags: TagSet, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::new(&mut store, vocab.len(), &config.encoder(), &mut rng);
        let segfeat = SegfeatParams::new(&mut store, encoder.output_dim(), &segfeat_config, &mut rng);
        let y = tags.len();
        let crf_w = store.add_uniform("crf.w", &[y, segfeat_config.dim], 0.1, &mut rng);
        let crf_b = store.add("crf.b", Tensor::zeros(&[y]));
        let trans = store.add("crf.trans", Tensor::zeros(&[y + 1, y]));
        TaggerModel {
            config,
            segfeat_config,
            vocab,
            tags,
            store,
            encoder,
            segfeat,
            crf_w,
            crf_b,
            trans,
        }
    }

    pub fn layout(&self, seq: &CharSequence) -> LatticeLayout {
        LatticeLayout::new(seq.len(), self.config.max_len)
    }

    pub fn sequence(&self, text: &str) -> Option<CharSequence> {
        CharSequence::from_text(text, &self.vocab)
    }

    /// Lattice scores and the transition matrix on `tape`.
    pub fn lattice_tape<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        seq: &CharSequence,
        dropout: Option<&mut Dropout>,
    ) -> Result<(Var, Var), ModelError> {
        let layout = self.layout(seq);
        let states = char_states(tape, &self.store, &self.encoder, seq, dropout)?;
        let feats = segment_features(tape, &self.store, &self.segfeat, states, layout)?;
        let w = tape.param(&self.store, self.crf_w);
        let b = tape.param(&self.store, self.crf_b);
        let scores = score_lattice_tape(tape, feats, w, b)?;
        let trans = tape.param(&self.store, self.trans);
        Ok((scores, trans))
    }

    /// Negative log-likelihood of `gold` on `tape`.
    pub fn loss<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        seq: &CharSequence,
        gold: &Segmentation,
        dropout: Option<&mut Dropout>,
    ) -> Result<Var, ModelError> {
        let (scores, trans) = self.lattice_tape(tape, seq, dropout)?;
        Ok(nll_tape(tape, self.layout(seq), gold, scores, trans)?)
    }

    pub fn score(&self, seq: &CharSequence) -> Result<ScoredLattice, ModelError> {
        let mut tape = Tape::new();
        let (scores, _) = self.lattice_tape(&mut tape, seq, None)?;
        Ok(ScoredLattice::new(self.layout(seq), tape.value(scores).clone())?)
    }

    pub fn decode(&self, seq: &CharSequence) -> Result<Segmentation, ModelError> {
        let lattice = self.score(seq)?;
        Ok(viterbi(&lattice, self.store.get(self.trans))?.0)
    }

    /// Segments and labels raw text. Blank text gives no tokens.
    pub fn tag_text(&self, text: &str) -> Result<Vec<Predicted>, ModelError> {
        let Some(seq) = self.sequence(text) else {
            return Ok(Vec::new());
        };
        let seg = self.decode(&seq)?;
        Ok(seg
            .segments()
            .iter()
            .map(|s| Predicted {
                start: s.start,
                len: s.len,
                form: seq.spaced_slice(s.start, s.end()),
                label: self.tags.label(s.label).to_string(),
                space_after: seq.space_after[s.end() - 1],
            })
            .collect())
    }

    /// Tags raw text into a [`Sentence`]; `None` for blank text.
    pub fn tag_sentence(&self, id: Option<String>, text: &str) -> Result<Option<Sentence>, ModelError> {
        let pred = self.tag_text(text)?;
        if pred.is_empty() {
            return Ok(None);
        }
        let n = pred.len();
        let tokens = pred
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut t = Token::new(p.form, p.label);
                t.space_after = p.space_after || i + 1 == n;
                t
            })
            .collect();
        Ok(Some(Sentence::assemble(id, tokens)?))
    }
}
