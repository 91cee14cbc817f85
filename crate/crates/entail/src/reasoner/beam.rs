//! Beam search over partial proofs with nucleus candidate pruning, deductive
//! and abductive expansions, and greedy-rollout seeding.

use crate::controller::PoolEntry;
use crate::embed::EmbeddingModel;
use crate::generator::GeneratorBackend;
use crate::tree::EntailmentTree;

use super::greedy::{goal_reached, greedy_partials};
use super::{
    filter_facts, nucleus_select, FinishedTree, PartialProof, ReasonConfig, ReasonError, Scorer,
};

/// A finished tree with its ranking keys, best first.
#[derive(Debug, Clone)]
pub struct RankedTree {
    pub tree: EntailmentTree,
    pub cumulative_score: f64,
    pub goal_distance: f64,
    pub step_count: usize,
}

/// Beam search: maintain the `beam_size` best partials by cumulative score;
/// expand each with nucleus-selected deductive candidates and (optionally)
/// abductive candidates; collect finished trees.
///
/// The greedy rollout is always included among the finished candidates, so
/// the best returned cumulative score never falls below greedy's. Results
/// are sorted by goal distance, then cumulative score, then step count.
pub fn beam_construct(
    model: &EmbeddingModel,
    scorer: &dyn Scorer,
    generator: &GeneratorBackend,
    hypothesis: &str,
    pool: &[PoolEntry],
    config: &ReasonConfig,
) -> Result<Vec<RankedTree>, ReasonError> {
    if pool.len() < 2 {
        return Err(ReasonError::PoolExhausted(pool.len()));
    }
    let hypothesis_vec = model.encode(hypothesis)?;
    let mut beam = vec![PartialProof::seed(model, hypothesis, pool)?];
    let mut finished: Vec<FinishedTree> = Vec::new();

    // Every move shrinks the pool by at least one, so rounds are bounded.
    let max_rounds = pool.len() + config.max_steps + 2;
    for _ in 0..max_rounds {
        if beam.is_empty() {
            break;
        }
        let mut next: Vec<PartialProof> = Vec::new();
        for partial in &beam {
            let budget_spent = partial.steps.len() + partial.pending.len() >= config.max_steps;
            if partial.entries.len() < 2 || budget_spent {
                finished.push(partial.clone().finish(hypothesis, &hypothesis_vec, model)?);
                continue;
            }
            let state = partial.as_state(hypothesis, &hypothesis_vec);

            let moves = scorer.moves(&state)?;
            let keyed: Vec<(Vec<crate::tree::NodeId>, f64)> =
                moves.iter().map(|m| (m.premises.clone(), m.prob)).collect();
            for premises in nucleus_select(&keyed, config.top_p) {
                let prob = keyed
                    .iter()
                    .find(|(k, _)| *k == premises)
                    .map(|(_, p)| *p)
                    .unwrap_or(f64::MIN_POSITIVE);
                let mut child = partial.clone();
                // A scorer may propose pairs the generator cannot realize
                // (oracle misses); such children are dropped, not fatal.
                if child.apply_move(model, generator, &premises, prob).is_err() {
                    continue;
                }
                if config.rescore_facts && config.delta > 0.0 {
                    child.entries =
                        filter_facts(scorer, &hypothesis_vec, &child.entries, config.delta);
                }
                if goal_reached(&child, config) {
                    finished.push(child.finish(hypothesis, &hypothesis_vec, model)?);
                } else {
                    if config.collect_partials {
                        finished.push(child.clone().finish(hypothesis, &hypothesis_vec, model)?);
                    }
                    next.push(child);
                }
            }

            if config.use_abduction {
                let candidates = scorer.abduce(&state)?;
                for id in nucleus_select(&candidates, config.top_abd_p) {
                    let prob = candidates
                        .iter()
                        .find(|(k, _)| *k == id)
                        .map(|(_, p)| *p)
                        .unwrap_or(f64::MIN_POSITIVE);
                    let mut child = partial.clone();
                    if child.apply_abduce(model, generator, id, prob).is_err() {
                        continue;
                    }
                    if child.entries.len() <= 1 {
                        finished.push(child.finish(hypothesis, &hypothesis_vec, model)?);
                    } else {
                        next.push(child);
                    }
                }
            }
        }
        next.sort_by(|a, b| {
            b.ranking_score(config.length_normalize)
                .total_cmp(&a.ranking_score(config.length_normalize))
        });
        next.truncate(config.beam_size.max(1));
        beam = next;
    }
    for partial in beam {
        finished.push(partial.finish(hypothesis, &hypothesis_vec, model)?);
    }

    // Seed with the greedy rollout.
    if let Ok(partials) = greedy_partials(model, scorer, generator, hypothesis, pool, config) {
        let last = partials.into_iter().last().expect("non-empty");
        finished.push(last.finish(hypothesis, &hypothesis_vec, model)?);
    }

    // Identical trees reached by different trajectories keep their best
    // attribution: highest cumulative score, then smallest goal distance.
    let mut by_tree: std::collections::BTreeMap<String, FinishedTree> =
        std::collections::BTreeMap::new();
    for f in finished {
        let key = crate::tree::serialize_proof(&f.tree).unwrap_or_default();
        match by_tree.get_mut(&key) {
            Some(existing) => {
                if f.cumulative_score > existing.cumulative_score
                    || (f.cumulative_score == existing.cumulative_score
                        && f.goal_distance < existing.goal_distance)
                {
                    *existing = f;
                }
            }
            None => {
                by_tree.insert(key, f);
            }
        }
    }
    let mut out: Vec<RankedTree> = by_tree
        .into_values()
        .map(|f| RankedTree {
            tree: f.tree,
            cumulative_score: f.cumulative_score,
            goal_distance: f.goal_distance,
            step_count: f.step_count,
        })
        .collect();
    out.sort_by(|a, b| {
        a.goal_distance
            .total_cmp(&b.goal_distance)
            .then(b.cumulative_score.total_cmp(&a.cumulative_score))
            .then(a.step_count.cmp(&b.step_count))
            .then_with(|| {
                crate::tree::serialize_proof(&a.tree)
                    .unwrap_or_default()
                    .cmp(&crate::tree::serialize_proof(&b.tree).unwrap_or_default())
            })
    });
    Ok(out)
}
