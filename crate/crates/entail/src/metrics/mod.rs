//! Evaluation of predicted trees against gold: intermediate alignment by
//! leaf-descendant overlap, F1/AllCorrect over leaves, steps, and
//! intermediates, the overall conjunction, and ranking metrics.

mod rank;

pub use rank::{rank_metrics, RankError};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::embed::tokenize;
use crate::generator::{ExternalClient, GenError};
use crate::tree::{EntailmentTree, NodeId, ValidationMode, Violation};

pub const DEFAULT_TAU: f64 = 0.28;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("tree is invalid: {0:?}")]
    InvalidTree(Vec<Violation>),
    #[error("external similarity failed: {0}")]
    Similarity(#[from] GenError),
}

/// Injective mapping from predicted intermediates to gold intermediates with
/// the Jaccard score of their leaf-descendant sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Alignment {
    pub mapping: BTreeMap<NodeId, (NodeId, f64)>,
}

impl Alignment {
    pub fn gold_for(&self, pred: NodeId) -> Option<NodeId> {
        self.mapping.get(&pred).map(|(g, _)| *g)
    }

    pub fn total_jaccard(&self) -> f64 {
        self.mapping.values().map(|(_, j)| j).sum()
    }
}

fn jaccard(a: &BTreeSet<NodeId>, b: &BTreeSet<NodeId>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

fn validated(tree: &EntailmentTree) -> Result<(), MetricError> {
    let violations = tree.validate(ValidationMode::Lenient);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(MetricError::InvalidTree(violations))
    }
}

/// Greedy maximum-Jaccard matching of predicted to gold intermediates by
/// leaf-descendant sets: candidate pairs sorted score-descending (ties by
/// smaller gold id, then pred id), taken while both sides are unmatched.
/// Zero-overlap pairs never match.
pub fn align_trees(pred: &EntailmentTree, gold: &EntailmentTree) -> Result<Alignment, MetricError> {
    validated(pred)?;
    validated(gold)?;
    let pred_sets: Vec<(NodeId, BTreeSet<NodeId>)> = pred
        .intermediates
        .keys()
        .map(|&id| (id, pred.leaf_descendants(id).unwrap_or_default()))
        .collect();
    let gold_sets: Vec<(NodeId, BTreeSet<NodeId>)> = gold
        .intermediates
        .keys()
        .map(|&id| (id, gold.leaf_descendants(id).unwrap_or_default()))
        .collect();

    let mut candidates: Vec<(f64, NodeId, NodeId)> = Vec::new();
    for (p, pset) in &pred_sets {
        for (g, gset) in &gold_sets {
            let j = jaccard(pset, gset);
            if j > 0.0 {
                candidates.push((j, *g, *p));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut mapping = BTreeMap::new();
    let mut gold_taken = BTreeSet::new();
    for (score, g, p) in candidates {
        if mapping.contains_key(&p) || gold_taken.contains(&g) {
            continue;
        }
        mapping.insert(p, (g, score));
        gold_taken.insert(g);
    }
    Ok(Alignment { mapping })
}

fn f1_of_sets<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let inter = pred.intersection(gold).count() as f64;
    2.0 * inter / (pred.len() + gold.len()) as f64
}

/// F1 over leaf id sets; all-correct iff they coincide.
pub fn eval_leaves(pred: &EntailmentTree, gold: &EntailmentTree) -> (f64, bool) {
    let f1 = f1_of_sets(&pred.leaf_ids(), &gold.leaf_ids());
    (f1, (f1 - 1.0).abs() < 1e-12)
}

/// A predicted step matches a gold step when its premise set, with leaves
/// mapped by id and intermediates through the alignment, equals the gold
/// premise set. F1 over the two step multisets.
pub fn eval_steps(
    pred: &EntailmentTree,
    gold: &EntailmentTree,
    alignment: &Alignment,
) -> (f64, bool) {
    let map_premises = |step: &crate::tree::Step| -> Option<BTreeSet<NodeId>> {
        step.premises
            .iter()
            .map(|p| match p {
                NodeId::Sent(_) => Some(*p),
                NodeId::Int(_) => alignment.gold_for(*p),
                NodeId::Hypothesis => None,
            })
            .collect()
    };
    let mut gold_sets: Vec<BTreeSet<NodeId>> =
        gold.steps.iter().map(|s| s.premise_set()).collect();
    let mut matched = 0usize;
    for step in &pred.steps {
        let Some(mapped) = map_premises(step) else { continue };
        if let Some(pos) = gold_sets.iter().position(|g| *g == mapped) {
            gold_sets.remove(pos);
            matched += 1;
        }
    }
    let f1 = 2.0 * matched as f64 / (pred.steps.len() + gold.steps.len()) as f64;
    (f1, (f1 - 1.0).abs() < 1e-12)
}

/// Text similarity used to judge generated intermediates. The default is
/// token-level F1 over the shared tokenizer; External defers to a scorer
/// speaking the generator wire protocol and replying with a number.
pub enum Similarity {
    TokenF1,
    External(ExternalClient),
}

impl Similarity {
    pub fn score(&self, a: &str, b: &str) -> Result<f64, MetricError> {
        match self {
            Similarity::TokenF1 => Ok(token_f1(a, b)),
            Similarity::External(client) => {
                let text =
                    client.generate_segments("similarity", &[a.to_string(), b.to_string()])?;
                text.trim().parse::<f64>().map_err(|_| {
                    MetricError::Similarity(GenError::ExternalProtocol(format!(
                        "similarity response is not a number: {text:?}"
                    )))
                })
            }
        }
    }
}

/// Bag-of-tokens F1 between two texts.
pub fn token_f1(a: &str, b: &str) -> f64 {
    let bag = |s: &str| -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for t in tokenize(s) {
            *m.entry(t).or_insert(0) += 1;
        }
        m
    };
    let (pa, ga) = (bag(a), bag(b));
    if pa.is_empty() && ga.is_empty() {
        return 1.0;
    }
    if pa.is_empty() || ga.is_empty() {
        return 0.0;
    }
    let common: usize = pa
        .iter()
        .map(|(t, c)| ga.get(t).map_or(0, |g| (*g).min(*c)))
        .sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pa.values().sum::<usize>() as f64;
    let recall = common as f64 / ga.values().sum::<usize>() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// An aligned intermediate counts as correct when its text similarity to the
/// gold text exceeds tau. Unmatched predictions fall on precision, unmatched
/// gold on recall.
pub fn eval_intermediates(
    pred: &EntailmentTree,
    gold: &EntailmentTree,
    alignment: &Alignment,
    sim: &Similarity,
    tau: f64,
) -> Result<(f64, bool), MetricError> {
    let pred_n = pred.intermediates.len();
    let gold_n = gold.intermediates.len();
    if pred_n == 0 && gold_n == 0 {
        return Ok((1.0, true));
    }
    if pred_n == 0 || gold_n == 0 {
        return Ok((0.0, false));
    }
    let mut correct = 0usize;
    for (p, (g, _)) in &alignment.mapping {
        let p_text = &pred.intermediates[p];
        let g_text = &gold.intermediates[g];
        if sim.score(p_text, g_text)? > tau {
            correct += 1;
        }
    }
    let f1 = 2.0 * correct as f64 / (pred_n + gold_n) as f64;
    Ok((f1, (f1 - 1.0).abs() < 1e-12))
}

/// The overall bit: every family all-correct.
pub fn eval_overall(leaves_ac: bool, steps_ac: bool, intermediates_ac: bool) -> bool {
    leaves_ac && steps_ac && intermediates_ac
}

/// Per-tree evaluation across all four families.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TreeEval {
    pub id: String,
    pub leaves_f1: f64,
    pub leaves_allcorrect: bool,
    pub steps_f1: f64,
    pub steps_allcorrect: bool,
    pub intermediates_f1: f64,
    pub intermediates_allcorrect: bool,
    pub overall_allcorrect: bool,
}

/// Dataset-level aggregates: mean F1 and all-correct rates in [0, 1].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub leaves_f1: f64,
    pub leaves_allcorrect: f64,
    pub steps_f1: f64,
    pub steps_allcorrect: f64,
    pub intermediates_f1: f64,
    pub intermediates_allcorrect: f64,
    pub overall_allcorrect: f64,
    pub per_tree: Vec<TreeEval>,
}

pub fn evaluate_tree(
    id: &str,
    pred: &EntailmentTree,
    gold: &EntailmentTree,
    sim: &Similarity,
    tau: f64,
) -> Result<TreeEval, MetricError> {
    let alignment = align_trees(pred, gold)?;
    let (leaves_f1, leaves_ac) = eval_leaves(pred, gold);
    let (steps_f1, steps_ac) = eval_steps(pred, gold, &alignment);
    let (ints_f1, ints_ac) = eval_intermediates(pred, gold, &alignment, sim, tau)?;
    Ok(TreeEval {
        id: id.to_string(),
        leaves_f1,
        leaves_allcorrect: leaves_ac,
        steps_f1,
        steps_allcorrect: steps_ac,
        intermediates_f1: ints_f1,
        intermediates_allcorrect: ints_ac,
        overall_allcorrect: eval_overall(leaves_ac, steps_ac, ints_ac),
    })
}

pub fn evaluate_dataset(
    pairs: &[(String, EntailmentTree, EntailmentTree)],
    sim: &Similarity,
    tau: f64,
) -> Result<EvalReport, MetricError> {
    let mut per_tree = Vec::with_capacity(pairs.len());
    for (id, pred, gold) in pairs {
        per_tree.push(evaluate_tree(id, pred, gold, sim, tau)?);
    }
    let n = per_tree.len().max(1) as f64;
    let mean = |f: &dyn Fn(&TreeEval) -> f64| per_tree.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        leaves_f1: mean(&|t| t.leaves_f1),
        leaves_allcorrect: mean(&|t| t.leaves_allcorrect as u8 as f64),
        steps_f1: mean(&|t| t.steps_f1),
        steps_allcorrect: mean(&|t| t.steps_allcorrect as u8 as f64),
        intermediates_f1: mean(&|t| t.intermediates_f1),
        intermediates_allcorrect: mean(&|t| t.intermediates_allcorrect as u8 as f64),
        overall_allcorrect: mean(&|t| t.overall_allcorrect as u8 as f64),
        per_tree,
    })
}
