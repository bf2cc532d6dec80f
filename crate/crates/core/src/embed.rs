//! Word embedding table with pre-trained loading.
//!
//! Rows that come from a pre-trained file are frozen; every other row
//! (reserved tokens and out-of-file words) starts as a small seeded random
//! vector and trains normally.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;
use crate::util::seeded_rng;
use crate::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} values after the token, got {got}")]
    WrongValueCount { line: usize, expected: usize, got: usize },
    #[error("line {line}: could not parse '{value}' as a float")]
    BadFloat { line: usize, value: String },
    #[error("line {line}: empty line in embedding file")]
    EmptyLine { line: usize },
}

const INIT_SCALE: f64 = 0.1;

/// V x d embedding matrix plus a per-row frozen mask.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    weights: Tensor,
    frozen: Vec<bool>,
    dim: usize,
}

/// What `load_pretrained` found in the file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub matched: usize,
    pub vocabulary_words: usize,
}

impl Coverage {
    pub fn ratio(&self) -> f64 {
        if self.vocabulary_words == 0 {
            0.0
        } else {
            self.matched as f64 / self.vocabulary_words as f64
        }
    }
}

impl EmbeddingTable {
    /// All-trainable table with seeded uniform rows.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let weights = Tensor::uniform(&[vocab.len(), dim], INIT_SCALE, &mut rng).with_grad();
        EmbeddingTable { weights, frozen: vec![false; vocab.len()], dim }
    }

    /// Loads a plain-text embedding file: one token per line followed by
    /// `dim` whitespace-separated decimal floats. Tokens found in the file
    /// get its vector and are frozen; everything else keeps the seeded
    /// random initialization. Duplicate file tokens: last occurrence wins.
    pub fn load_pretrained(
        path: &Path,
        vocab: &Vocabulary,
        dim: usize,
        seed: u64,
    ) -> Result<(Self, Coverage), EmbedError> {
        let mut table = Self::random(vocab, dim, seed);
        let text = fs::read_to_string(path).map_err(|source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut matched_rows = vec![false; vocab.len()];
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                return Err(EmbedError::EmptyLine { line: line_no });
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line has a first field");
            let values: Vec<&str> = fields.collect();
            if values.len() != dim {
                return Err(EmbedError::WrongValueCount {
                    line: line_no,
                    expected: dim,
                    got: values.len(),
                });
            }
            let Some(id) = vocab.id_of(token) else { continue };
            let row = &mut table.weights.data_mut()[id * dim..(id + 1) * dim];
            for (slot, raw) in row.iter_mut().zip(&values) {
                *slot = raw.parse::<f64>().map_err(|_| EmbedError::BadFloat {
                    line: line_no,
                    value: raw.to_string(),
                })?;
            }
            matched_rows[id] = true;
            table.frozen[id] = true;
        }
        let matched = matched_rows.iter().filter(|&&m| m).count();
        let coverage = Coverage {
            matched,
            vocabulary_words: vocab.len() - crate::vocab::RESERVED.len(),
        };
        Ok((table, coverage))
    }

    /// Reassembles a table from checkpoint parts. The weight matrix must be
    /// rows x dim with one frozen flag per row.
    pub fn from_parts(weights: Tensor, frozen: Vec<bool>, dim: usize) -> Self {
        assert_eq!(weights.shape(), &[frozen.len(), dim]);
        let mut weights = weights;
        weights.set_requires_grad(true);
        EmbeddingTable { weights, frozen, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.frozen.len()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn set_frozen(&mut self, frozen: Vec<bool>) {
        assert_eq!(frozen.len(), self.rows());
        self.frozen = frozen;
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.weights.data()[id * self.dim..(id + 1) * self.dim]
    }

    /// Zeroes gradient rows for frozen tokens, so the optimizer leaves the
    /// pre-trained vectors untouched.
    pub fn mask_frozen_grad(&mut self) {
        let dim = self.dim;
        let frozen = self.frozen.clone();
        if let Some(grad) = self.weights.grad_mut() {
            for (id, is_frozen) in frozen.iter().enumerate() {
                if *is_frozen {
                    grad[id * dim..(id + 1) * dim].fill(0.0);
                }
            }
        }
    }
}
