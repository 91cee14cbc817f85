//! Controller training losses and their analytic gradients.
//!
//! Fact loss: a level-ranking hinge over pairs of relevant facts (facts
//! closer to the root should score higher, margin gamma3) plus a
//! lambda-weighted binary cross-entropy separating relevant facts from
//! distractors. Step loss: a softmax-probability hinge ranking the gold step
//! above sampled negative pairs (gamma4) plus a correlation hinge requiring
//! the gold premises' summed embedding to sit closer to the hypothesis
//! (gamma5). The abductive head trains with the same probability hinge over
//! known-premise candidates.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embed::TableGrad;

use super::train::ControllerTrainConfig;
use super::{concat2, concat3, sigmoid, step_logits, ControllerHeads, ProofState, ScorerHead};

#[derive(Debug, Error, PartialEq)]
pub enum ControllerLossError {
    #[error("no pool entry carries a relevance label")]
    MissingLabels,
    #[error("state has no gold step")]
    MissingGoldStep,
    #[error("gold step has {0} premises, step scoring needs exactly 2")]
    NonBinaryGold(usize),
    #[error("gold premise {0} is not in the state pool")]
    GoldNotInPool(crate::tree::NodeId),
}

/// Flat per-head gradients (layout matches `ScorerHead::param`), plus the
/// embedding-table gradient when encoder updates are enabled.
#[derive(Debug)]
pub struct HeadsGrad {
    pub fact: Vec<f64>,
    pub step: Vec<f64>,
    pub abduce: Vec<f64>,
    pub table: Option<TableGrad>,
}

impl HeadsGrad {
    pub fn zeros(heads: &ControllerHeads, with_table: bool) -> Self {
        HeadsGrad {
            fact: vec![0.0; heads.fact.param_count()],
            step: vec![0.0; heads.step.param_count()],
            abduce: vec![0.0; heads.abduce.param_count()],
            table: if with_table { Some(TableGrad::default()) } else { None },
        }
    }
}

impl ScorerHead {
    /// Accumulate `upstream * dz/dparam` into `grad` and, when `dx` is given,
    /// `upstream * dz/dx` into it.
    pub(crate) fn backprop(
        &self,
        x: &[f64],
        upstream: f64,
        grad: &mut [f64],
        mut dx: Option<&mut [f64]>,
    ) {
        match &self.hidden {
            None => {
                for (c, xv) in x.iter().enumerate() {
                    grad[c] += upstream * xv;
                }
                grad[self.w_out.len()] += upstream;
                if let Some(dx) = dx.as_deref_mut() {
                    for (c, w) in self.w_out.iter().enumerate() {
                        dx[c] += upstream * w;
                    }
                }
            }
            Some(h) => {
                let nw = h.w.len();
                let nb = h.b.len();
                for r in 0..h.dim {
                    let row = &h.w[r * self.input_dim..(r + 1) * self.input_dim];
                    let pre = super::dot(row, x) + h.b[r];
                    let t = pre.tanh();
                    let dpre = upstream * self.w_out[r] * (1.0 - t * t);
                    for (c, xv) in x.iter().enumerate() {
                        grad[r * self.input_dim + c] += dpre * xv;
                    }
                    grad[nw + r] += dpre;
                    grad[nw + nb + r] += upstream * t;
                    if let Some(dx) = dx.as_deref_mut() {
                        for (c, w) in row.iter().enumerate() {
                            dx[c] += dpre * w;
                        }
                    }
                }
                grad[nw + nb + h.dim] += upstream;
            }
        }
    }
}

/// Distribute a vector gradient over a mean-pooled sentence's token rows.
fn scatter_tokens(table: &mut TableGrad, tokens: &[usize], grad: &[f64]) {
    if tokens.is_empty() {
        return;
    }
    let per_token = 1.0 / tokens.len() as f64;
    for &t in tokens {
        let row = table.rows.entry(t).or_insert_with(|| vec![0.0; grad.len()]);
        for (r, g) in row.iter_mut().zip(grad) {
            *r += per_token * g;
        }
    }
}

/// Split a `[h; a; b]` input gradient back onto hypothesis and pool tokens.
fn scatter_concat3(
    table: &mut TableGrad,
    dim: usize,
    dx: &[f64],
    h_tokens: &[usize],
    a_tokens: &[usize],
    b_tokens: &[usize],
) {
    scatter_tokens(table, h_tokens, &dx[..dim]);
    scatter_tokens(table, a_tokens, &dx[dim..2 * dim]);
    scatter_tokens(table, b_tokens, &dx[2 * dim..]);
}

pub fn loss_fact(
    heads: &ControllerHeads,
    states: &[ProofState],
    config: &ControllerTrainConfig,
) -> Result<f64, ControllerLossError> {
    loss_fact_grad(heads, states, config).map(|(l, _)| l)
}

pub fn loss_fact_grad(
    heads: &ControllerHeads,
    states: &[ProofState],
    config: &ControllerTrainConfig,
) -> Result<(f64, HeadsGrad), ControllerLossError> {
    // First pass: term counts.
    let mut n_rank = 0usize;
    let mut n_bce = 0usize;
    for state in states {
        let relevant = ranked_relevant(state);
        for i in 0..relevant.len() {
            for j in 0..relevant.len() {
                if i != j && relevant[i].1 < relevant[j].1 {
                    n_rank += 1;
                }
            }
        }
        n_bce += state.pool.iter().filter(|e| e.relevant.is_some()).count();
    }
    if n_bce == 0 {
        return Err(ControllerLossError::MissingLabels);
    }
    let bce_sign = if config.subtract_bce { -1.0 } else { 1.0 };
    let rank_scale = if n_rank > 0 { 1.0 / n_rank as f64 } else { 0.0 };
    let bce_scale = bce_sign * config.lambda / n_bce as f64;

    let mut loss = 0.0;
    let mut grad = HeadsGrad::zeros(heads, config.update_encoder);

    for state in states {
        let h = &state.hypothesis_vec;
        // Per-entry logits and upstream coefficients, accumulated across the
        // ranking pairs and BCE terms before one backprop pass per entry.
        let logits: Vec<Option<f64>> = state
            .pool
            .iter()
            .map(|e| {
                e.relevant
                    .map(|_| heads.fact.logit(&concat2(h, &e.vector)))
            })
            .collect();
        let mut upstream = vec![0.0; state.pool.len()];

        let relevant = ranked_relevant(state);
        for &(i, level_i) in &relevant {
            for &(j, level_j) in &relevant {
                if level_i >= level_j {
                    continue;
                }
                // Entry i is closer to the root and should outscore entry j.
                let g_t = sigmoid(logits[i].unwrap());
                let g_d = sigmoid(logits[j].unwrap());
                let hinge = g_d - g_t + config.gamma3;
                if hinge > 0.0 {
                    loss += hinge * rank_scale;
                    upstream[j] += rank_scale * g_d * (1.0 - g_d);
                    upstream[i] -= rank_scale * g_t * (1.0 - g_t);
                }
            }
        }

        for (idx, entry) in state.pool.iter().enumerate() {
            let Some(relevant) = entry.relevant else { continue };
            let z = logits[idx].unwrap();
            let y = if relevant { 1.0 } else { 0.0 };
            // Numerically stable BCE of sigmoid(z) against y.
            let bce = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            loss += bce_scale * bce;
            upstream[idx] += bce_scale * (sigmoid(z) - y);
        }

        for (idx, entry) in state.pool.iter().enumerate() {
            if upstream[idx] == 0.0 || entry.relevant.is_none() {
                continue;
            }
            let x = concat2(h, &entry.vector);
            let mut dx = config.update_encoder.then(|| vec![0.0; x.len()]);
            heads
                .fact
                .backprop(&x, upstream[idx], &mut grad.fact, dx.as_deref_mut());
            if let (Some(table), Some(dx)) = (grad.table.as_mut(), dx) {
                scatter_tokens(table, &state.hypothesis_tokens, &dx[..heads.dim]);
                scatter_tokens(table, &entry.tokens, &dx[heads.dim..]);
            }
        }
    }
    Ok((loss, grad))
}

/// Relevant pool entries carrying levels, as (pool index, level).
fn ranked_relevant(state: &ProofState) -> Vec<(usize, usize)> {
    state
        .pool
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match (e.relevant, e.level) {
            (Some(true), Some(level)) => Some((i, level)),
            _ => None,
        })
        .collect()
}

pub fn loss_step(
    heads: &ControllerHeads,
    states: &[ProofState],
    config: &ControllerTrainConfig,
    seed: u64,
) -> Result<f64, ControllerLossError> {
    loss_step_grad(heads, states, config, seed).map(|(l, _)| l)
}

struct GoldCandidates {
    pairs: Vec<(usize, usize)>,
    gold: usize,
    negatives: Vec<usize>,
}

/// Candidate pairs in pool-index order, the gold candidate's position, and
/// the sampled negative candidate positions.
fn gold_candidates(
    state: &ProofState,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GoldCandidates, ControllerLossError> {
    let gold_step = state.gold_step.as_ref().ok_or(ControllerLossError::MissingGoldStep)?;
    if gold_step.premises.len() != 2 {
        return Err(ControllerLossError::NonBinaryGold(gold_step.premises.len()));
    }
    let mut gold_idx = [0usize; 2];
    for (slot, premise) in gold_step.premises.iter().enumerate() {
        gold_idx[slot] = state
            .index_of(*premise)
            .ok_or(ControllerLossError::GoldNotInPool(*premise))?;
    }
    gold_idx.sort_unstable();

    let n = state.pool.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    let mut gold = usize::MAX;
    for i in 0..n {
        for j in (i + 1)..n {
            if (i, j) == (gold_idx[0], gold_idx[1]) {
                gold = pairs.len();
            }
            pairs.push((i, j));
        }
    }
    debug_assert!(gold != usize::MAX);

    let mut others: Vec<usize> = (0..pairs.len()).filter(|&q| q != gold).collect();
    others.shuffle(rng);
    others.truncate(k);
    others.sort_unstable();
    Ok(GoldCandidates { pairs, gold, negatives: others })
}

pub fn loss_step_grad(
    heads: &ControllerHeads,
    states: &[ProofState],
    config: &ControllerTrainConfig,
    seed: u64,
) -> Result<(f64, HeadsGrad), ControllerLossError> {
    // First pass: sample negatives and count accumulation elements.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled = Vec::with_capacity(states.len());
    let mut n_terms = 0usize;
    for state in states {
        let cands = gold_candidates(state, config.negatives_k, &mut rng)?;
        n_terms += cands.negatives.len();
        sampled.push(cands);
    }
    let scale = if n_terms > 0 { 1.0 / n_terms as f64 } else { 0.0 };

    let mut loss = 0.0;
    let mut grad = HeadsGrad::zeros(heads, config.update_encoder);

    for (state, cands) in states.iter().zip(&sampled) {
        if cands.negatives.is_empty() {
            continue;
        }
        let h = &state.hypothesis_vec;
        let logits = step_logits(heads, state);
        let probs = super::softmax(logits.iter().map(|(_, z)| *z));

        let gold_pair = cands.pairs[cands.gold];
        let sum_gold = crate::embed::vec_add(
            &state.pool[gold_pair.0].vector,
            &state.pool[gold_pair.1].vector,
        );
        let d_gold = l2(&sum_gold, h);

        // Coefficients dL/dP per candidate from the probability hinge.
        let mut coeff = vec![0.0; cands.pairs.len()];
        for &m in &cands.negatives {
            let hinge = probs[m] - probs[cands.gold] + config.gamma4;
            if hinge > 0.0 {
                loss += hinge * scale;
                coeff[m] += scale;
                coeff[cands.gold] -= scale;
            }

            let neg_pair = cands.pairs[m];
            let sum_neg = crate::embed::vec_add(
                &state.pool[neg_pair.0].vector,
                &state.pool[neg_pair.1].vector,
            );
            let d_neg = l2(&sum_neg, h);
            let corr = d_gold - d_neg + config.gamma5;
            if corr > 0.0 {
                loss += corr * scale;
                if let Some(table) = grad.table.as_mut() {
                    scatter_correlation(
                        table, state, heads.dim, &sum_gold, d_gold, gold_pair, h, scale,
                    );
                    scatter_correlation(
                        table, state, heads.dim, &sum_neg, d_neg, neg_pair, h, -scale,
                    );
                }
            }
        }

        // Softmax backprop: dL/dz_r = P_r (coeff_r - sum_q coeff_q P_q).
        let mix: f64 = coeff.iter().zip(&probs).map(|(c, p)| c * p).sum();
        for (r, &(i, j)) in cands.pairs.iter().enumerate() {
            let dz = probs[r] * (coeff[r] - mix);
            if dz == 0.0 {
                continue;
            }
            let a = &state.pool[i];
            let b = &state.pool[j];
            for (first, second) in [(a, b), (b, a)] {
                let x = concat3(h, &first.vector, &second.vector);
                let mut dx = config.update_encoder.then(|| vec![0.0; x.len()]);
                heads
                    .step
                    .backprop(&x, 0.5 * dz, &mut grad.step, dx.as_deref_mut());
                if let (Some(table), Some(dx)) = (grad.table.as_mut(), dx) {
                    scatter_concat3(
                        table,
                        heads.dim,
                        &dx,
                        &state.hypothesis_tokens,
                        &first.tokens,
                        &second.tokens,
                    );
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Gradient of `sign * d(sum, h)` into premise tokens and the hypothesis.
#[allow(clippy::too_many_arguments)]
fn scatter_correlation(
    table: &mut TableGrad,
    state: &ProofState,
    dim: usize,
    sum: &[f64],
    dist: f64,
    pair: (usize, usize),
    h: &[f64],
    sign_scale: f64,
) {
    if dist <= 0.0 {
        return;
    }
    let unit: Vec<f64> = sum
        .iter()
        .zip(h)
        .map(|(s, hv)| sign_scale * (s - hv) / dist)
        .collect();
    scatter_tokens(table, &state.pool[pair.0].tokens, &unit);
    scatter_tokens(table, &state.pool[pair.1].tokens, &unit);
    let neg: Vec<f64> = unit.iter().map(|u| -u).collect();
    scatter_tokens(table, &state.hypothesis_tokens, &neg);
    let _ = dim;
}

fn l2(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Hinge loss training the abductive head: each gold premise, acting as the
/// known premise of the gold step's conclusion, should outrank sampled pool
/// entries under the abductive softmax.
pub fn loss_abduce(
    heads: &ControllerHeads,
    states: &[ProofState],
    config: &ControllerTrainConfig,
    seed: u64,
) -> Result<f64, ControllerLossError> {
    loss_abduce_grad(heads, states, config, seed).map(|(l, _)| l)
}

pub(crate) fn loss_abduce_grad(
    heads: &ControllerHeads,
    states: &[ProofState],
    config: &ControllerTrainConfig,
    seed: u64,
) -> Result<(f64, HeadsGrad), ControllerLossError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    struct Sample {
        golds: Vec<usize>,
        negatives: Vec<usize>,
    }
    let mut sampled = Vec::with_capacity(states.len());
    let mut n_terms = 0usize;
    for state in states {
        let gold_step = state.gold_step.as_ref().ok_or(ControllerLossError::MissingGoldStep)?;
        let mut golds = Vec::new();
        for premise in &gold_step.premises {
            golds.push(
                state
                    .index_of(*premise)
                    .ok_or(ControllerLossError::GoldNotInPool(*premise))?,
            );
        }
        let mut negatives: Vec<usize> =
            (0..state.pool.len()).filter(|i| !golds.contains(i)).collect();
        negatives.shuffle(&mut rng);
        negatives.truncate(config.negatives_k);
        negatives.sort_unstable();
        n_terms += golds.len() * negatives.len();
        sampled.push(Sample { golds, negatives });
    }
    let scale = if n_terms > 0 { 1.0 / n_terms as f64 } else { 0.0 };

    let mut loss = 0.0;
    let mut grad = HeadsGrad::zeros(heads, config.update_encoder);

    for (state, sample) in states.iter().zip(&sampled) {
        if sample.negatives.is_empty() {
            continue;
        }
        let Some(goal) = state.goal.as_ref() else { continue };
        let h = &state.hypothesis_vec;
        let logits: Vec<f64> = state
            .pool
            .iter()
            .map(|e| heads.abduce_logit(h, &goal.vector, &e.vector))
            .collect();
        let probs = super::softmax(logits.iter().copied());

        let mut coeff = vec![0.0; state.pool.len()];
        for &g in &sample.golds {
            for &m in &sample.negatives {
                let hinge = probs[m] - probs[g] + config.gamma4;
                if hinge > 0.0 {
                    loss += hinge * scale;
                    coeff[m] += scale;
                    coeff[g] -= scale;
                }
            }
        }
        let mix: f64 = coeff.iter().zip(&probs).map(|(c, p)| c * p).sum();
        for (r, entry) in state.pool.iter().enumerate() {
            let dz = probs[r] * (coeff[r] - mix);
            if dz == 0.0 {
                continue;
            }
            let x = concat3(h, &goal.vector, &entry.vector);
            let mut dx = config.update_encoder.then(|| vec![0.0; x.len()]);
            heads
                .abduce
                .backprop(&x, dz, &mut grad.abduce, dx.as_deref_mut());
            if let (Some(table), Some(dx)) = (grad.table.as_mut(), dx) {
                scatter_concat3(
                    table,
                    heads.dim,
                    &dx,
                    &state.hypothesis_tokens,
                    &goal.tokens,
                    &entry.tokens,
                );
            }
        }
    }
    Ok((loss, grad))
}
