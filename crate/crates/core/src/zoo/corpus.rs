//! Byte-level toy corpus.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Batch;
use crate::error::{Error, Result};

pub const BYTE_VOCAB: usize = 256;
pub const DEFAULT_SEQ_LEN: usize = 128;

#[derive(Clone, Debug)]
pub struct Corpus {
    tokens: Vec<usize>,
}

impl Corpus {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self { tokens: bytes.iter().map(|&b| b as usize).collect() })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::Config(format!("cannot read corpus {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Windows of `seq_len + 1` tokens with stride `seq_len`, so each token
    /// after the first is a prediction target exactly once. A trailing window
    /// shorter than two tokens is dropped.
    pub fn sequences(&self, seq_len: usize) -> Vec<Vec<usize>> {
        assert!(seq_len > 0);
        let mut out = Vec::new();
        let mut start = 0;
        while start + 1 < self.tokens.len() {
            let end = (start + seq_len + 1).min(self.tokens.len());
            out.push(self.tokens[start..end].to_vec());
            start += seq_len;
        }
        out
    }
}

/// `count` distinct sequence indices chosen by `seed`, sorted ascending.
pub fn select_indices(available: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..available).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(count.min(available));
    idx.sort_unstable();
    idx
}

pub fn batch_from(seqs: &[Vec<usize>], indices: &[usize]) -> Batch {
    Batch::Sequences(indices.iter().map(|&i| seqs[i].clone()).collect())
}

/// Contiguous minibatches of `size` sequences.
pub fn minibatches(seqs: &[Vec<usize>], size: usize) -> Vec<Batch> {
    seqs.chunks(size.max(1)).map(|c| Batch::Sequences(c.to_vec())).collect()
}
