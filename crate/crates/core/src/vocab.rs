//! Token vocabularies with reserved control tokens, plus the tokenizer the
//! whole pipeline shares.
//!
//! Case is preserved: capitalization carries signal for the models, and the
//! KG index does its own (lowercasing) normalization separately.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::util::{atomic_write, fnv1a};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;
pub const SEP: usize = 4;

pub const RESERVED: [&str; 5] = ["<pad>", "<unk>", "<sos>", "<eos>", "<sep>"];

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("max_size must exceed the 5 reserved tokens, got {0}")]
    MaxSizeTooSmall(usize),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Characters split off as standalone tokens wherever they occur.
const PUNCT: [char; 9] = ['.', ',', ';', ':', '!', '?', '(', ')', '"'];

fn is_split_punct(c: char) -> bool {
    PUNCT.contains(&c)
}

/// Whitespace tokenization with punctuation from [`PUNCT`] separated into
/// standalone tokens. Offsets are in characters of the input.
pub fn tokenize_with_offsets(text: &str) -> Vec<(String, usize, usize)> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut word_start = 0;
    for (ci, c) in text.chars().enumerate() {
        if c.is_whitespace() || is_split_punct(c) {
            if !word.is_empty() {
                tokens.push((std::mem::take(&mut word), word_start, ci));
            }
            if is_split_punct(c) {
                tokens.push((c.to_string(), ci, ci + 1));
            }
        } else {
            if word.is_empty() {
                word_start = ci;
            }
            word.push(c);
        }
    }
    if !word.is_empty() {
        let end = text.chars().count();
        tokens.push((word, word_start, end));
    }
    tokens
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|(t, _, _)| t).collect()
}

/// Bijection between tokens and ids, with ids 0..4 reserved for
/// PAD, UNK, SOS, EOS, SEP in that fixed order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from a token stream: tokens ranked by frequency,
    /// ties broken lexicographically, truncated to `max_size` (which counts
    /// the reserved tokens).
    pub fn build<I, S>(tokens: I, max_size: usize, min_count: u64) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_size <= RESERVED.len() {
            return Err(VocabError::MaxSizeTooSmall(max_size));
        }
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for tok in tokens {
            let tok = tok.as_ref();
            if tok.is_empty() || RESERVED.contains(&tok) {
                continue;
            }
            *counts.entry(tok.to_string()).or_insert(0) += 1;
        }
        let mut ranked: Vec<(String, u64)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        ranked.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
        ranked.truncate(max_size - RESERVED.len());

        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(ranked.into_iter().map(|(t, _)| t));
        Ok(Self::from_tokens(id_to_token))
    }

    fn from_tokens(id_to_token: Vec<String>) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { token_to_id, id_to_token }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token_of(&self, id: usize) -> Result<&str, VocabError> {
        self.id_to_token
            .get(id)
            .map(|s| s.as_str())
            .ok_or(VocabError::IdOutOfRange { id, size: self.id_to_token.len() })
    }

    /// Unknown tokens map to UNK.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id_of(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>, VocabError> {
        ids.iter().map(|&i| self.token_of(i).map(str::to_string)).collect()
    }

    /// Stable fingerprint over the full id order, stored in checkpoints.
    pub fn hash(&self) -> u64 {
        fnv1a(self.id_to_token.join("\n").as_bytes())
    }

    /// Writes one non-reserved token per line; line number plus the reserved
    /// offset recovers the id.
    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        let mut out = String::new();
        for tok in &self.id_to_token[RESERVED.len()..] {
            out.push_str(tok);
            out.push('\n');
        }
        atomic_write(path, out.as_bytes()).map_err(|source| VocabError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text = fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(text.lines().map(str::to_string));
        Ok(Self::from_tokens(id_to_token))
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}
