//! Binary model container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a
//! JSON header, then every tensor's values as little-endian `f64` in
//! header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunConfig;
use crate::corpus::{CharVocab, TagSet};
use crate::model::TaggerModel;

const MAGIC: &[u8; 8] = b"CHARTAG\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a model file")]
    Magic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("tensor mismatch: {0}")]
    Tensor(String),
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: RunConfig,
    char_vocab: Vec<char>,
    tags: Vec<String>,
    tensors: Vec<TensorEntry>,
    best_dev_joint_f1: f64,
    epoch: usize,
}

/// A trained model with the settings it was trained under.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: TaggerModel,
    pub config: RunConfig,
    pub best_dev_joint_f1: f64,
    /// Epoch the parameters come from.
    pub epoch: usize,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, w: W) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(w);
        let m = &self.model;
        let header = Header {
            config: self.config.clone(),
            char_vocab: m.vocab.chars().to_vec(),
            tags: m.tags.labels().to_vec(),
            tensors: m
                .store
                .iter()
                .map(|(_, name, t)| TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            best_dev_joint_f1: self.best_dev_joint_f1,
            epoch: self.epoch,
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, _, t) in m.store.iter() {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self, CheckpointError> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| CheckpointError::Magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;

        let vocab = CharVocab::from_chars(header.char_vocab.iter().copied());
        if vocab.chars() != header.char_vocab.as_slice() {
            return Err(CheckpointError::Tensor("character vocabulary is not in canonical order".into()));
        }
        let tags = TagSet::from_labels(header.tags.iter().cloned());
        if tags.labels() != header.tags.as_slice() {
            return Err(CheckpointError::Tensor("tag set is not in canonical order".into()));
        }
        let mut model = TaggerModel::new(
            header.config.model.clone(),
            header.config.segfeat.clone(),
            vocab,
            tags,
            0,
        );
        let ids: Vec<_> = model.store.ids().collect();
        if ids.len() != header.tensors.len() {
            return Err(CheckpointError::Tensor(format!(
                "expected {} tensors, file has {}",
                ids.len(),
                header.tensors.len()
            )));
        }
        for (id, entry) in ids.into_iter().zip(&header.tensors) {
            let name = model.store.name(id).to_string();
            let t = model.store.get_mut(id);
            if name != entry.name || t.shape() != entry.shape.as_slice() {
                return Err(CheckpointError::Tensor(format!(
                    "{} {:?} in file, model expects {} {:?}",
                    entry.name,
                    entry.shape,
                    name,
                    t.shape()
                )));
            }
            for v in t.data_mut() {
                r.read_exact(&mut b8)?;
                *v = f64::from_le_bytes(b8);
            }
        }
        Ok(Checkpoint {
            model,
            config: header.config,
            best_dev_joint_f1: header.best_dev_joint_f1,
            epoch: header.epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        self.write(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read(File::open(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }
}
