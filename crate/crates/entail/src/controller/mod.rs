//! Selection controller: scores facts for relevance and candidate steps for
//! composition, on top of frozen (by default) sentence embeddings.
//!
//! Heads are affine maps over concatenated vectors, optionally with one tanh
//! hidden layer; step scores are symmetrized over premise order and
//! normalized by softmax across a state's candidate set.

mod io;
mod loss;
mod train;

pub use io::{load_heads, save_heads, HeadsCheckpointError};
pub use loss::{loss_abduce, loss_fact, loss_fact_grad, loss_step, loss_step_grad, ControllerLossError, HeadsGrad};
pub use train::{
    enumerate_states, enumerate_states_with_distractors, train_controller,
    train_controller_with_curve, ControllerTrainConfig, ControllerTrainError,
    ControllerTrainOutput, StateError,
};

use thiserror::Error;

use crate::embed::EmbeddingModel;
use crate::tree::{NodeId, Step};

/// One scoring head: affine over the concatenated input, or a one-hidden-layer
/// tanh network when `hidden` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerHead {
    pub input_dim: usize,
    pub hidden: Option<Hidden>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub dim: usize,
    /// Row-major `dim x input_dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ScorerHead {
    pub fn zeros(input_dim: usize, hidden_dim: Option<usize>) -> Self {
        let hidden = hidden_dim.map(|dim| Hidden {
            dim,
            w: vec![0.0; dim * input_dim],
            b: vec![0.0; dim],
        });
        let out_dim = hidden_dim.unwrap_or(input_dim);
        ScorerHead { input_dim, hidden, w_out: vec![0.0; out_dim], b_out: 0.0 }
    }

    pub fn init_random(input_dim: usize, hidden_dim: Option<usize>, seed: u64) -> Self {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut head = Self::zeros(input_dim, hidden_dim);
        let scale = 1.0 / (input_dim as f64).sqrt();
        if let Some(h) = &mut head.hidden {
            for w in &mut h.w {
                *w = rng.gen_range(-scale..scale);
            }
        }
        let out_scale = 1.0 / (head.w_out.len() as f64).sqrt();
        for w in &mut head.w_out {
            *w = rng.gen_range(-out_scale..out_scale);
        }
        head
    }

    /// Raw score of one concatenated input.
    pub fn logit(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim);
        match &self.hidden {
            None => dot(&self.w_out, x) + self.b_out,
            Some(h) => {
                let mut acc = self.b_out;
                for r in 0..h.dim {
                    let pre = dot(&h.w[r * self.input_dim..(r + 1) * self.input_dim], x) + h.b[r];
                    acc += self.w_out[r] * pre.tanh();
                }
                acc
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let hidden = self.hidden.as_ref().map_or(0, |h| h.w.len() + h.b.len());
        hidden + self.w_out.len() + 1
    }

    /// Flat parameter view: hidden weights, hidden biases, output weights,
    /// output bias. Gradients use the same layout.
    pub fn param(&self, index: usize) -> f64 {
        let mut i = index;
        if let Some(h) = &self.hidden {
            if i < h.w.len() {
                return h.w[i];
            }
            i -= h.w.len();
            if i < h.b.len() {
                return h.b[i];
            }
            i -= h.b.len();
        }
        if i < self.w_out.len() {
            return self.w_out[i];
        }
        self.b_out
    }

    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        let mut i = index;
        if let Some(h) = &mut self.hidden {
            if i < h.w.len() {
                return &mut h.w[i];
            }
            i -= h.w.len();
            if i < h.b.len() {
                return &mut h.b[i];
            }
            i -= h.b.len();
        }
        if i < self.w_out.len() {
            return &mut self.w_out[i];
        }
        &mut self.b_out
    }

    pub fn is_finite(&self) -> bool {
        let hidden_ok = self
            .hidden
            .as_ref()
            .is_none_or(|h| h.w.iter().chain(&h.b).all(|v| v.is_finite()));
        hidden_ok && self.w_out.iter().all(|v| v.is_finite()) && self.b_out.is_finite()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// The three trained heads. Fact scoring reads `[h; s]`, step scoring
/// `[h; s_i; s_j]`, abductive scoring `[h; goal; s]` with its own parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerHeads {
    pub dim: usize,
    pub fact: ScorerHead,
    pub step: ScorerHead,
    pub abduce: ScorerHead,
}

impl ControllerHeads {
    pub fn zeros(dim: usize, hidden_dim: Option<usize>) -> Self {
        ControllerHeads {
            dim,
            fact: ScorerHead::zeros(2 * dim, hidden_dim),
            step: ScorerHead::zeros(3 * dim, hidden_dim),
            abduce: ScorerHead::zeros(3 * dim, hidden_dim),
        }
    }

    pub fn init_random(dim: usize, hidden_dim: Option<usize>, seed: u64) -> Self {
        ControllerHeads {
            dim,
            fact: ScorerHead::init_random(2 * dim, hidden_dim, seed.wrapping_mul(3).wrapping_add(1)),
            step: ScorerHead::init_random(3 * dim, hidden_dim, seed.wrapping_mul(3).wrapping_add(2)),
            abduce: ScorerHead::init_random(3 * dim, hidden_dim, seed.wrapping_mul(3).wrapping_add(3)),
        }
    }

    /// Symmetrized raw step score: logits of both premise orders averaged.
    pub fn step_logit(&self, h: &[f64], s_i: &[f64], s_j: &[f64]) -> f64 {
        let forward = self.step.logit(&concat3(h, s_i, s_j));
        let backward = self.step.logit(&concat3(h, s_j, s_i));
        0.5 * (forward + backward)
    }

    pub fn abduce_logit(&self, h: &[f64], goal: &[f64], s: &[f64]) -> f64 {
        self.abduce.logit(&concat3(h, goal, s))
    }
}

pub(crate) fn concat2(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

pub(crate) fn concat3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len() + c.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.extend_from_slice(c);
    out
}

/// A pool member available for composition: text, embedding, and (in
/// supervised states) its relevance label and gold-tree level.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub id: NodeId,
    pub text: String,
    pub vector: Vec<f64>,
    pub tokens: Vec<usize>,
    pub relevant: Option<bool>,
    pub level: Option<usize>,
}

impl PoolEntry {
    pub fn from_text(
        model: &EmbeddingModel,
        id: NodeId,
        text: &str,
    ) -> Result<Self, crate::embed::EncodeError> {
        Ok(PoolEntry {
            id,
            text: text.to_string(),
            vector: model.encode(text)?,
            tokens: model.vocab.indices(text),
            relevant: None,
            level: None,
        })
    }
}

/// The open conclusion an abductive move would decompose.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalNode {
    pub text: String,
    pub vector: Vec<f64>,
    pub tokens: Vec<usize>,
}

/// One decision point: the hypothesis, the available pool, the partial tree
/// built so far, and (in training) the gold step taken here.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofState {
    pub hypothesis: String,
    pub hypothesis_vec: Vec<f64>,
    pub hypothesis_tokens: Vec<usize>,
    pub pool: Vec<PoolEntry>,
    pub partial_steps: Vec<Step>,
    pub gold_step: Option<Step>,
    pub goal: Option<GoalNode>,
}

impl ProofState {
    pub fn entry(&self, id: NodeId) -> Option<&PoolEntry> {
        self.pool.iter().find(|e| e.id == id)
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.pool.iter().position(|e| e.id == id)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("pool of {0} is too small to form a step")]
    PoolTooSmall(usize),
    #[error("state has no open conclusion to decompose")]
    NoOpenConclusion,
}

/// Relevance score of one fact against the hypothesis, strictly in (0, 1).
pub fn score_fact(heads: &ControllerHeads, h: &[f64], s: &[f64]) -> Result<f64, ScoreError> {
    if h.len() != heads.dim || s.len() != heads.dim {
        return Err(ScoreError::DimMismatch { expected: heads.dim, got: h.len().max(s.len()) });
    }
    Ok(sigmoid(heads.fact.logit(&concat2(h, s))))
}

/// Probability of each unordered premise pair, keyed in canonical
/// (ascending `NodeId`) order.
pub type StepDistribution = Vec<((NodeId, NodeId), f64)>;

/// Softmax distribution over all unordered pool pairs, sorted by pair key.
pub fn score_steps(
    heads: &ControllerHeads,
    state: &ProofState,
) -> Result<StepDistribution, ScoreError> {
    if state.pool.len() < 2 {
        return Err(ScoreError::PoolTooSmall(state.pool.len()));
    }
    let logits = step_logits(heads, state);
    let probs = softmax(logits.iter().map(|(_, z)| *z));
    let mut out: Vec<((NodeId, NodeId), f64)> = logits
        .into_iter()
        .zip(probs)
        .map(|((pair, _), p)| (pair, p))
        .collect();
    out.sort_by_key(|(pair, _)| *pair);
    Ok(out)
}

/// Candidate pairs in pool-index order with raw symmetrized logits.
pub(crate) fn step_logits(
    heads: &ControllerHeads,
    state: &ProofState,
) -> Vec<((NodeId, NodeId), f64)> {
    let mut out = Vec::with_capacity(state.pool.len() * (state.pool.len() - 1) / 2);
    for i in 0..state.pool.len() {
        for j in (i + 1)..state.pool.len() {
            let a = &state.pool[i];
            let b = &state.pool[j];
            let pair = if a.id <= b.id { (a.id, b.id) } else { (b.id, a.id) };
            out.push((pair, heads.step_logit(&state.hypothesis_vec, &a.vector, &b.vector)));
        }
    }
    out
}

/// Softmax distribution over decompositions of the state's open conclusion,
/// one candidate per pool member acting as the known premise.
pub fn score_steps_abductive(
    heads: &ControllerHeads,
    state: &ProofState,
) -> Result<Vec<(NodeId, f64)>, ScoreError> {
    let goal = state.goal.as_ref().ok_or(ScoreError::NoOpenConclusion)?;
    if state.pool.is_empty() {
        return Err(ScoreError::PoolTooSmall(0));
    }
    let logits: Vec<(NodeId, f64)> = state
        .pool
        .iter()
        .map(|e| (e.id, heads.abduce_logit(&state.hypothesis_vec, &goal.vector, &e.vector)))
        .collect();
    let probs = softmax(logits.iter().map(|(_, z)| *z));
    let mut out: Vec<(NodeId, f64)> = logits
        .into_iter()
        .zip(probs)
        .map(|((id, _), p)| (id, p))
        .collect();
    out.sort_by_key(|(id, _)| *id);
    Ok(out)
}

/// Numerically stable softmax preserving input order.
pub(crate) fn softmax(logits: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
