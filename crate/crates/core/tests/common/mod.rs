//! Shared oracles and helpers for the integration tests.
#![allow(dead_code)]

pub mod oracles;

use std::collections::HashMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chartag::corpus::{parse_conllu, CharSequence, CharVocab, Sentence, TagDoc, TagSet, Token};
use chartag::model::{ModelConfig, TaggerModel};
use chartag::numeric::{Tape, Tensor};
use chartag::segfeat::{FeaturizerKind, SegfeatConfig};
use chartag::semicrf::{LatticeLayout, ScoredLattice, Segment, Segmentation};
use chartag::trainer::RunConfig;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load_fixture(name: &str) -> TagDoc {
    let f = std::fs::File::open(fixture(name)).expect("fixture exists");
    parse_conllu(std::io::BufReader::new(f)).expect("fixture parses")
}

/// Every labelled segmentation of `0..t` with pieces of length ≤ `max_len`.
pub fn all_segmentations(t: usize, max_len: usize, y: usize) -> Vec<Vec<Segment>> {
    if t == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for d in 1..=max_len.min(t) {
        for prefix in all_segmentations(t - d, max_len, y) {
            for lab in 0..y {
                let mut s = prefix.clone();
                s.push(Segment::new(t - d, d, lab));
                out.push(s);
            }
        }
    }
    out
}

/// Score of a labelled segmentation computed directly from its definition.
pub fn path_score(segs: &[Segment], lat: &ScoredLattice, trans: &Tensor) -> f64 {
    let y = trans.cols();
    let mut prev = y;
    let mut s = 0.0;
    for g in segs {
        s += lat.get(g.start, g.len, g.label) + trans.at(prev, g.label);
        prev = g.label;
    }
    s
}

pub fn naive_lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Random lattice and transitions; integer scores make ties real.
pub fn random_problem(rng: &mut ChaCha8Rng, t: usize, max_len: usize, y: usize, int: bool) -> (ScoredLattice, Tensor) {
    let layout = LatticeLayout::new(t, max_len);
    let mut draw = || {
        if int {
            rng.gen_range(0..3) as f64
        } else {
            rng.gen_range(-2.0..2.0)
        }
    };
    let scores: Vec<f64> = (0..layout.rows() * y).map(|_| draw()).collect();
    let trans: Vec<f64> = (0..(y + 1) * y).map(|_| draw()).collect();
    (
        ScoredLattice::new(layout, Tensor::new(vec![layout.rows(), y], scores).unwrap()).unwrap(),
        Tensor::new(vec![y + 1, y], trans).unwrap(),
    )
}

/// Documented tie-break: among equal scores the winner has the smallest
/// (last label, last length, previous label, previous length, ...).
pub fn tie_key(s: &[Segment]) -> Vec<usize> {
    s.iter().rev().flat_map(|g| [g.label, g.len]).collect()
}

/// Whitespace tokenizer with the majority training label per form.
pub struct MajorityBaseline {
    by_form: HashMap<String, String>,
    fallback: String,
}

impl MajorityBaseline {
    pub fn train(doc: &TagDoc) -> Self {
        let mut counts: HashMap<String, HashMap<String, usize>> = HashMap::new();
        let mut overall: HashMap<String, usize> = HashMap::new();
        for t in doc.sentences.iter().flat_map(|s| &s.tokens) {
            *counts.entry(t.form.clone()).or_default().entry(t.upos.clone()).or_default() += 1;
            *overall.entry(t.upos.clone()).or_default() += 1;
        }
        // ties resolve to the alphabetically first label
        let majority = |m: &HashMap<String, usize>| {
            m.iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(l, _)| l.clone())
                .expect("non-empty counts")
        };
        MajorityBaseline {
            by_form: counts.iter().map(|(f, m)| (f.clone(), majority(m))).collect(),
            fallback: majority(&overall),
        }
    }

    pub fn tag(&self, doc: &TagDoc) -> TagDoc {
        TagDoc::new(
            doc.sentences
                .iter()
                .map(|s| {
                    let tokens = s
                        .text
                        .split_whitespace()
                        .map(|w| Token::new(w, self.by_form.get(w).unwrap_or(&self.fallback).clone()))
                        .collect();
                    Sentence::assemble(s.id.clone(), tokens).unwrap()
                })
                .collect(),
        )
    }
}

/// A configuration small enough for single-core tests.
pub fn small_config(kind: FeaturizerKind) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model = ModelConfig {
        embed_dim: 16,
        hidden: 32,
        layers: 1,
        max_len: 23,
    };
    cfg.segfeat = SegfeatConfig {
        kind,
        dim: 32,
        srnn_hidden: 16,
        ..SegfeatConfig::default()
    };
    cfg
}

/// A four-character, two-label instance: "ab cd" tagged X Y.
pub fn tiny_instance(kind: FeaturizerKind, seed: u64) -> (TaggerModel, CharSequence, Segmentation) {
    let vocab = CharVocab::from_chars("abcd".chars());
    let tags = TagSet::from_labels(["X", "Y"]);
    let config = ModelConfig {
        embed_dim: 3,
        hidden: 3,
        layers: 2,
        max_len: 23,
    };
    let seg = SegfeatConfig {
        kind,
        dim: 4,
        srnn_hidden: 3,
        ..SegfeatConfig::default()
    };
    let mut model = TaggerModel::new(config, seg, vocab, tags, seed);
    // transitions start at zero; give them values so their gradient is generic
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    for v in model.store.get_mut(model.trans).data_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
    for v in model.store.get_mut(model.crf_b).data_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
    let seq = model.sequence("ab cd").unwrap();
    let gold = Segmentation::new(vec![Segment::new(0, 2, 0), Segment::new(2, 2, 1)]);
    (model, seq, gold)
}

pub fn loss_value(model: &TaggerModel, seq: &CharSequence, gold: &Segmentation) -> f64 {
    let mut tape = Tape::new();
    let l = model.loss(&mut tape, seq, gold, None).unwrap();
    tape.value(l).item()
}

/// Largest relative error between the tape gradient and central
/// differences over every parameter scalar, with the parameter name.
pub fn max_gradient_error(model: &mut TaggerModel, seq: &CharSequence, gold: &Segmentation, h: f64) -> (f64, String) {
    let grads = {
        let mut tape = Tape::new();
        let l = model.loss(&mut tape, seq, gold, None).unwrap();
        tape.backward_params(l, &model.store).unwrap()
    };
    let mut worst = (0.0, String::new());
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        for i in 0..model.store.get(id).len() {
            let orig = model.store.get(id).data()[i];
            model.store.get_mut(id).data_mut()[i] = orig + h;
            let up = loss_value(model, seq, gold);
            model.store.get_mut(id).data_mut()[i] = orig - h;
            let down = loss_value(model, seq, gold);
            model.store.get_mut(id).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.get(id).data()[i];
            let err = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            if err > worst.0 {
                worst = (err, format!("{}[{i}]", model.store.name(id)));
            }
        }
    }
    worst
}
