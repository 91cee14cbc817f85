//! Greedy iteration: take the argmax step, generate its conclusion, update
//! the pool, repeat until a stopping condition fires.
//!
//! Stopping: (a) the newest conclusion's embedding is within the configured
//! threshold of the goal, (b) the pool is down to one node, or (c) the step
//! budget is exhausted. On (b)/(c) the last conclusion is relabeled as the
//! hypothesis-concluding step.

use crate::controller::PoolEntry;
use crate::embed::{distance, EmbeddingModel};
use crate::generator::GeneratorBackend;
use crate::tree::EntailmentTree;

use super::{filter_facts, MoveCandidate, PartialProof, ReasonConfig, ReasonError, Scorer};

/// Run the greedy loop, returning the partial after every iteration. The
/// last element is the final construction.
pub fn greedy_partials(
    model: &EmbeddingModel,
    scorer: &dyn Scorer,
    generator: &GeneratorBackend,
    hypothesis: &str,
    pool: &[PoolEntry],
    config: &ReasonConfig,
) -> Result<Vec<PartialProof>, ReasonError> {
    if pool.len() < 2 {
        return Err(ReasonError::PoolExhausted(pool.len()));
    }
    let hypothesis_vec = model.encode(hypothesis)?;
    let mut partial = PartialProof::seed(model, hypothesis, pool)?;
    let mut snapshots = Vec::new();

    while partial.entries.len() >= 2 && partial.steps.len() < config.max_steps {
        let state = partial.as_state(hypothesis, &hypothesis_vec);
        let moves = scorer.moves(&state)?;
        let best = argmax_move(&moves).ok_or(ReasonError::PoolExhausted(partial.entries.len()))?;
        partial.apply_move(model, generator, &best.premises, best.prob)?;
        if config.rescore_facts && config.delta > 0.0 {
            partial.entries = filter_facts(scorer, &hypothesis_vec, &partial.entries, config.delta);
        }
        snapshots.push(partial.clone());
        if goal_reached(&partial, config) {
            break;
        }
    }
    if snapshots.is_empty() {
        return Err(ReasonError::PoolExhausted(pool.len()));
    }
    Ok(snapshots)
}

/// Highest-probability move; ties broken by the lexicographically smallest
/// premise list.
pub(crate) fn argmax_move(moves: &[MoveCandidate]) -> Option<&MoveCandidate> {
    moves
        .iter()
        .max_by(|a, b| a.prob.total_cmp(&b.prob).then_with(|| b.premises.cmp(&a.premises)))
}

/// Stopping condition (a): newest conclusion within threshold of the goal.
pub(crate) fn goal_reached(partial: &PartialProof, config: &ReasonConfig) -> bool {
    let Some(last) = partial.last_built else { return false };
    let Some(entry) = partial.entries.iter().find(|e| e.id == last) else {
        return false;
    };
    match distance(&entry.vector, &partial.goal.vector) {
        Ok(d) => d < config.stop_threshold,
        Err(_) => false,
    }
}

/// Build one tree greedily from the filtered pool.
pub fn greedy_construct(
    model: &EmbeddingModel,
    scorer: &dyn Scorer,
    generator: &GeneratorBackend,
    hypothesis: &str,
    pool: &[PoolEntry],
    config: &ReasonConfig,
) -> Result<EntailmentTree, ReasonError> {
    let hypothesis_vec = model.encode(hypothesis)?;
    let partials = greedy_partials(model, scorer, generator, hypothesis, pool, config)?;
    let last = partials.into_iter().last().expect("non-empty by construction");
    Ok(last.finish(hypothesis, &hypothesis_vec, model)?.tree)
}

/// Pick the partial whose root claim embeds nearest the hypothesis (ties:
/// higher cumulative score, then fewer steps, then earlier snapshot) and
/// close it into a tree.
pub fn best_partial_match(
    model: &EmbeddingModel,
    partials: &[PartialProof],
    hypothesis: &str,
) -> Result<EntailmentTree, ReasonError> {
    if partials.is_empty() {
        return Err(ReasonError::EmptyInput);
    }
    let hypothesis_vec = model.encode(hypothesis)?;
    let mut best: Option<(usize, f64)> = None;
    for (idx, partial) in partials.iter().enumerate() {
        let Some(text) = partial.root_text() else { continue };
        let d = distance(&model.encode(text)?, &hypothesis_vec)?;
        let better = match best {
            None => true,
            Some((best_idx, best_d)) => {
                let current = &partials[best_idx];
                d.total_cmp(&best_d)
                    .then(current.cumulative_score.total_cmp(&partial.cumulative_score))
                    .then(partial.steps.len().cmp(&current.steps.len()))
                    == std::cmp::Ordering::Less
            }
        };
        if better {
            best = Some((idx, d));
        }
    }
    let (idx, _) = best.ok_or(ReasonError::EmptyInput)?;
    Ok(partials[idx]
        .clone()
        .finish(hypothesis, &hypothesis_vec, model)?
        .tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerHeads;
    use crate::data::gen::random_tree;
    use crate::generator::OracleGenerator;
    use crate::reasoner::{pool_entries, GoldScorer};
    use crate::tree::{NodeId, ValidationMode};

    fn encoder_for(trees: &[crate::tree::EntailmentTree]) -> EmbeddingModel {
        let mut texts: Vec<String> = Vec::new();
        for tree in trees {
            texts.push(tree.hypothesis.clone());
            texts.extend(tree.leaves.iter().map(|f| f.text.clone()));
            texts.extend(tree.intermediates.values().cloned());
        }
        let vocab = crate::embed::Vocabulary::build(texts.iter().map(|s| s.as_str()));
        EmbeddingModel::init(vocab, 16, 3)
    }

    #[test]
    fn forced_move_with_two_facts() {
        let tree = random_tree(11, 2);
        let model = encoder_for(std::slice::from_ref(&tree));
        let heads = ControllerHeads::zeros(16, None);
        let pool = pool_entries(&model, &tree.leaves).unwrap();
        let generator = GeneratorBackend::template();
        let config = ReasonConfig { delta: 0.0, ..Default::default() };
        let built =
            greedy_construct(&model, &heads, &generator, &tree.hypothesis, &pool, &config)
                .unwrap();
        assert_eq!(built.steps.len(), 1);
        assert_eq!(built.steps[0].conclusion, NodeId::Hypothesis);
        assert_eq!(built.leaves.len(), 2);
        assert!(built.validate(ValidationMode::Strict).is_empty());
    }

    #[test]
    fn oracle_run_reconstructs_gold_trees() {
        for seed in 0..25u64 {
            let gold = random_tree(seed, 9);
            let model = encoder_for(std::slice::from_ref(&gold));
            let scorer = GoldScorer::from_tree(&gold);
            let mut oracle = OracleGenerator::new();
            oracle.absorb_tree(&gold);
            let generator = GeneratorBackend::Oracle(oracle);
            let pool = pool_entries(&model, &gold.leaves).unwrap();
            let config = ReasonConfig { delta: 0.0, ..Default::default() };
            let built =
                greedy_construct(&model, &scorer, &generator, &gold.hypothesis, &pool, &config)
                    .unwrap();
            assert_eq!(built, gold, "seed {seed}");
        }
    }

    #[test]
    fn steps_equal_used_leaves_minus_one() {
        for seed in 30..40u64 {
            let tree = random_tree(seed, 7);
            let model = encoder_for(std::slice::from_ref(&tree));
            let heads = ControllerHeads::init_random(16, Some(4), seed);
            let pool = pool_entries(&model, &tree.leaves).unwrap();
            let generator = GeneratorBackend::template();
            let config = ReasonConfig { delta: 0.0, ..Default::default() };
            let built =
                greedy_construct(&model, &heads, &generator, &tree.hypothesis, &pool, &config)
                    .unwrap();
            assert_eq!(built.steps.len(), built.leaves.len() - 1, "seed {seed}");
            assert!(built.validate(ValidationMode::Strict).is_empty());
            // Pool conservation: every iteration shrinks the pool by one, so
            // a full run uses the whole pool.
            assert_eq!(built.leaves.len(), pool.len());
        }
    }

    #[test]
    fn best_partial_prefers_zero_distance_root() {
        let gold = random_tree(5, 6);
        let model = encoder_for(std::slice::from_ref(&gold));
        let scorer = GoldScorer::from_tree(&gold);
        let mut oracle = OracleGenerator::new();
        oracle.absorb_tree(&gold);
        let generator = GeneratorBackend::Oracle(oracle);
        let pool = pool_entries(&model, &gold.leaves).unwrap();
        let config = ReasonConfig { delta: 0.0, ..Default::default() };
        let partials =
            greedy_partials(&model, &scorer, &generator, &gold.hypothesis, &pool, &config)
                .unwrap();
        // The final partial's root text is the hypothesis itself (distance
        // zero), so the best match must reproduce the gold tree.
        let chosen = best_partial_match(&model, &partials, &gold.hypothesis).unwrap();
        assert_eq!(chosen, gold);

        // Exhaustive comparison oracle over all partials.
        let hyp_vec = model.encode(&gold.hypothesis).unwrap();
        let dists: Vec<f64> = partials
            .iter()
            .map(|p| {
                let t = p.root_text().unwrap();
                distance(&model.encode(t).unwrap(), &hyp_vec).unwrap()
            })
            .collect();
        let min = dists.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(dists.last().copied().unwrap(), min);
    }

    #[test]
    fn empty_partials_is_an_error() {
        let tree = random_tree(2, 3);
        let model = encoder_for(std::slice::from_ref(&tree));
        assert!(matches!(
            best_partial_match(&model, &[], &tree.hypothesis),
            Err(ReasonError::EmptyInput)
        ));
    }
}
