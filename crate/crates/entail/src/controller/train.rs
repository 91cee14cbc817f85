//! Teacher-forced state enumeration and controller training.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embed::{EmbeddingModel, EncodeError};
use crate::tree::{EntailmentTree, Fact, NodeId, ValidationMode, Violation};

use super::loss::{loss_abduce_grad, loss_fact_grad, loss_step_grad, ControllerLossError};
use super::{ControllerHeads, GoalNode, PoolEntry, ProofState};

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerTrainConfig {
    pub gamma3: f64,
    pub gamma4: f64,
    pub gamma5: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Negative pairs sampled per state.
    pub negatives_k: usize,
    /// `None` keeps the heads affine; `Some(m)` adds one tanh layer of m units.
    pub hidden_dim: Option<usize>,
    /// Subtract the BCE term instead of adding it.
    pub subtract_bce: bool,
    /// Also apply gradients to the embedding table (off: table stays frozen).
    pub update_encoder: bool,
    pub train_abduction: bool,
}

impl Default for ControllerTrainConfig {
    fn default() -> Self {
        ControllerTrainConfig {
            gamma3: 0.1,
            gamma4: 0.1,
            gamma5: 0.1,
            lambda: 0.0,
            alpha: 1.0,
            beta: 1.0,
            learning_rate: 1.0,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            negatives_k: 8,
            hidden_dim: Some(16),
            subtract_bce: false,
            update_encoder: false,
            train_abduction: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("tree is invalid: {0:?}")]
    InvalidTree(Vec<Violation>),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Error)]
pub enum ControllerTrainError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Loss(#[from] ControllerLossError),
    #[error("no trainable states were produced from the input trees")]
    NoStates,
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
}

/// One decision state per gold step, in bottom-up topological order: the pool
/// holds the leaves plus intermediates concluded by earlier steps, minus the
/// nodes those steps consumed. Intermediate texts are the gold ones.
pub fn enumerate_states(
    model: &EmbeddingModel,
    tree: &EntailmentTree,
) -> Result<Vec<ProofState>, StateError> {
    enumerate_states_with_distractors(model, tree, &[])
}

/// Same, with distractor facts (labeled irrelevant) present in every pool.
pub fn enumerate_states_with_distractors(
    model: &EmbeddingModel,
    tree: &EntailmentTree,
    distractors: &[Fact],
) -> Result<Vec<ProofState>, StateError> {
    let violations = tree.validate(ValidationMode::Lenient);
    if !violations.is_empty() {
        return Err(StateError::InvalidTree(violations));
    }

    let hypothesis_vec = model.encode(&tree.hypothesis)?;
    let hypothesis_tokens = model.vocab.indices(&tree.hypothesis);

    let mut entries: Vec<PoolEntry> = Vec::new();
    for fact in &tree.leaves {
        let mut entry = PoolEntry::from_text(model, fact.id, &fact.text)?;
        entry.relevant = Some(true);
        entry.level = tree.node_level(fact.id).ok();
        entries.push(entry);
    }
    for fact in distractors {
        let mut entry = PoolEntry::from_text(model, fact.id, &fact.text)?;
        entry.relevant = Some(false);
        entries.push(entry);
    }
    entries.sort_by_key(|e| e.id);

    let mut states = Vec::with_capacity(tree.steps.len());
    let mut partial_steps = Vec::new();
    for step in tree.topological_steps() {
        let goal_text = match step.conclusion {
            NodeId::Hypothesis => tree.hypothesis.clone(),
            id => tree.intermediates[&id].clone(),
        };
        states.push(ProofState {
            hypothesis: tree.hypothesis.clone(),
            hypothesis_vec: hypothesis_vec.clone(),
            hypothesis_tokens: hypothesis_tokens.clone(),
            pool: entries.clone(),
            partial_steps: partial_steps.clone(),
            gold_step: Some(step.clone()),
            goal: Some(GoalNode {
                text: goal_text.clone(),
                vector: model.encode(&goal_text)?,
                tokens: model.vocab.indices(&goal_text),
            }),
        });
        partial_steps.push(step.clone());
        entries.retain(|e| !step.premises.contains(&e.id));
        if step.conclusion != NodeId::Hypothesis {
            let mut entry = PoolEntry::from_text(model, step.conclusion, &goal_text)?;
            entry.relevant = Some(true);
            entry.level = tree.node_level(step.conclusion).ok();
            entries.push(entry);
        }
    }
    Ok(states)
}

/// Heads trained on the given trees, plus the (possibly updated) embedding
/// model and the per-epoch loss curve.
pub struct ControllerTrainOutput {
    pub heads: ControllerHeads,
    pub model: EmbeddingModel,
    pub curve: Vec<f64>,
}

pub fn train_controller(
    model: &EmbeddingModel,
    trees: &[(EntailmentTree, Vec<Fact>)],
    config: &ControllerTrainConfig,
) -> Result<ControllerHeads, ControllerTrainError> {
    train_controller_with_curve(model, trees, config).map(|out| out.heads)
}

pub fn train_controller_with_curve(
    model: &EmbeddingModel,
    trees: &[(EntailmentTree, Vec<Fact>)],
    config: &ControllerTrainConfig,
) -> Result<ControllerTrainOutput, ControllerTrainError> {
    let mut model = model.clone();
    let mut states = Vec::new();
    for (tree, distractors) in trees {
        states.extend(enumerate_states_with_distractors(&model, tree, distractors)?);
    }
    if states.is_empty() {
        return Err(ControllerTrainError::NoStates);
    }

    let mut heads = ControllerHeads::init_random(model.dim, config.hidden_dim, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..states.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.update_encoder {
            refresh_vectors(&model, &mut states);
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
            let batch: Vec<ProofState> = chunk.iter().map(|&i| states[i].clone()).collect();
            let step_batch: Vec<ProofState> = batch
                .iter()
                .filter(|s| step_trainable(s))
                .cloned()
                .collect();
            let neg_seed = config
                .seed
                .wrapping_add(epoch as u64 * 1_000_003)
                .wrapping_add(batch_idx as u64 * 7919);

            let (fact_loss, fact_grad) = loss_fact_grad(&heads, &batch, config)?;
            let (step_loss, step_grad) = if step_batch.is_empty() {
                (0.0, None)
            } else {
                let (l, g) = loss_step_grad(&heads, &step_batch, config, neg_seed)?;
                (l, Some(g))
            };
            let (abd_loss, abd_grad) = if config.train_abduction && !step_batch.is_empty() {
                let (l, g) = loss_abduce_grad(&heads, &step_batch, config, neg_seed ^ 0xabd)?;
                (l, Some(g))
            } else {
                (0.0, None)
            };

            let total = config.alpha * (step_loss + abd_loss) + config.beta * fact_loss;
            if !total.is_finite() {
                return Err(ControllerTrainError::Diverged(epoch));
            }
            epoch_loss += total;
            batches += 1;

            let lr = config.learning_rate;
            for (i, g) in fact_grad.fact.iter().enumerate() {
                *heads.fact.param_mut(i) -= lr * config.beta * g;
            }
            if let Some(g) = &step_grad {
                for (i, gv) in g.step.iter().enumerate() {
                    *heads.step.param_mut(i) -= lr * config.alpha * gv;
                }
            }
            if let Some(g) = &abd_grad {
                for (i, gv) in g.abduce.iter().enumerate() {
                    *heads.abduce.param_mut(i) -= lr * config.alpha * gv;
                }
            }
            if config.update_encoder {
                for (grad, weight) in [
                    (fact_grad.table.as_ref(), config.beta),
                    (step_grad.as_ref().and_then(|g| g.table.as_ref()), config.alpha),
                    (abd_grad.as_ref().and_then(|g| g.table.as_ref()), config.alpha),
                ] {
                    let Some(table) = grad else { continue };
                    for (row, g) in &table.rows {
                        let base = row * model.dim;
                        for (c, gv) in g.iter().enumerate() {
                            model.table[base + c] -= lr * weight * gv;
                        }
                    }
                }
            }
        }
        curve.push(if batches > 0 { epoch_loss / batches as f64 } else { 0.0 });
        if !heads.fact.is_finite() || !heads.step.is_finite() || !heads.abduce.is_finite() {
            return Err(ControllerTrainError::Diverged(epoch));
        }
    }
    Ok(ControllerTrainOutput { heads, model, curve })
}

fn step_trainable(state: &ProofState) -> bool {
    match &state.gold_step {
        Some(step) => {
            step.premises.len() == 2
                && step.premises.iter().all(|p| state.index_of(*p).is_some())
        }
        None => false,
    }
}

pub(crate) fn refresh_vectors(model: &EmbeddingModel, states: &mut [ProofState]) {
    let encode_tokens = |tokens: &[usize]| -> Vec<f64> {
        let mut out = vec![0.0; model.dim];
        for &t in tokens {
            for (o, v) in out.iter_mut().zip(model.row(t)) {
                *o += v;
            }
        }
        let n = tokens.len().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    };
    for state in states {
        state.hypothesis_vec = encode_tokens(&state.hypothesis_tokens);
        for entry in &mut state.pool {
            entry.vector = encode_tokens(&entry.tokens);
        }
        if let Some(goal) = &mut state.goal {
            goal.vector = encode_tokens(&goal.tokens);
        }
    }
}
