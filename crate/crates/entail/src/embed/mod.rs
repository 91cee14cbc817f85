//! Sentence embeddings with translation-style geometry: a trainable token
//! embedding table with mean pooling, trained so that a conclusion's
//! embedding sits near the sum of its premises' embeddings under L2.

mod io;
pub(crate) mod loss;
mod train;

pub use io::{load_model, save_model, export_embeddings, CheckpointError};
pub use loss::{loss_con, loss_con_grad, loss_cor, loss_mut, loss_mut_grad, margin_accuracy, LossError, TableGrad};
pub use train::{mean_loss, train_encoder, train_encoder_with_curve, EncoderTrainConfig, TrainError};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Lowercase tokens split on non-alphanumeric boundaries.
///
/// Shared by the embedding model, the retrieval index, and the token-overlap
/// similarity so all three agree on what a token is.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub const UNK_TOKEN: &str = "<unk>";

/// Token-to-index map. Index 0 is reserved for unknown tokens; the remaining
/// indices are dense.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Build from an iterator of texts: tokens indexed in first-seen order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut index = BTreeMap::new();
        let mut next = 1usize;
        for text in texts {
            for token in tokenize(text) {
                index.entry(token).or_insert_with(|| {
                    let id = next;
                    next += 1;
                    id
                });
            }
        }
        Vocabulary { index }
    }

    pub fn from_tokens(tokens: impl IntoIterator<Item = (String, usize)>) -> Self {
        Vocabulary { index: tokens.into_iter().collect() }
    }

    /// Total row count including the unk row.
    pub fn size(&self) -> usize {
        self.index.len() + 1
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    /// Token indices of a sentence, unknown tokens mapped to the unk row.
    pub fn indices(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.lookup(t)).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.index.iter().map(|(t, i)| (t.as_str(), *i))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("text has no tokens: {0:?}")]
    EmptyText(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
}

/// Embedding table plus vocabulary. Sentences are encoded as the mean of
/// their token rows. Immutable once trained; freely shareable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub vocab: Vocabulary,
    pub dim: usize,
    /// Row-major `size() x dim` table; row 0 is the unk embedding.
    pub table: Vec<f64>,
}

impl EmbeddingModel {
    /// Seeded uniform init in (-0.5/d, 0.5/d) per coordinate.
    pub fn init(vocab: Vocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        let table = (0..vocab.size() * dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        EmbeddingModel { vocab, dim, table }
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.table[index * self.dim..(index + 1) * self.dim]
    }

    /// Mean of token rows. Unknown tokens use the unk row; a sentence with
    /// no tokens at all is an error.
    pub fn encode(&self, text: &str) -> Result<Vec<f64>, EncodeError> {
        let indices = self.vocab.indices(text);
        if indices.is_empty() {
            return Err(EncodeError::EmptyText(text.to_string()));
        }
        let mut out = vec![0.0; self.dim];
        for &idx in &indices {
            for (o, v) in out.iter_mut().zip(self.row(idx)) {
                *o += v;
            }
        }
        let n = indices.len() as f64;
        for o in &mut out {
            *o /= n;
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.table.iter().all(|v| v.is_finite())
    }
}

/// L2 distance between two vectors of equal dimension.
pub fn distance(u: &[f64], v: &[f64]) -> Result<f64, EncodeError> {
    if u.len() != v.len() {
        return Err(EncodeError::DimMismatch(u.len(), v.len()));
    }
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Elementwise sum, used for premise composition.
pub fn vec_add(u: &[f64], v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a + b).collect()
}

/// One training example: two premises and their conclusion. The JSONL wire
/// names follow the step notation: `s_b`, `s_e`, `i`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepTriple {
    #[serde(rename = "s_b")]
    pub premise_a: String,
    #[serde(rename = "s_e")]
    pub premise_b: String,
    #[serde(rename = "i")]
    pub conclusion: String,
}

impl StepTriple {
    pub fn new(a: impl Into<String>, b: impl Into<String>, c: impl Into<String>) -> Self {
        StepTriple { premise_a: a.into(), premise_b: b.into(), conclusion: c.into() }
    }
}
