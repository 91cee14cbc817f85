//! Tree-construction strategies: relevance filtering, greedy iteration,
//! best-partial selection, and beam search with nucleus candidate pruning.

mod beam;
mod greedy;

pub use beam::{beam_construct, RankedTree};
pub use greedy::{best_partial_match, greedy_construct, greedy_partials};

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::controller::{
    score_fact, score_steps, score_steps_abductive, ControllerHeads, GoalNode, PoolEntry,
    ProofState, ScoreError,
};
use crate::embed::{distance, vec_add, EmbeddingModel, EncodeError};
use crate::generator::GenError;
use crate::tree::{normalize_text, EntailmentTree, Fact, NodeId, Step};

#[derive(Debug, Clone, PartialEq)]
pub struct ReasonConfig {
    /// Facts scoring below this are dropped before and (when `rescore_facts`)
    /// during construction.
    pub delta: f64,
    pub beam_size: usize,
    pub top_p: f64,
    pub top_abd_p: f64,
    pub max_steps: usize,
    /// Stop once the newest conclusion's embedding is this close to the goal.
    pub stop_threshold: f64,
    /// Re-apply the relevance filter to the grown pool after each step.
    pub rescore_facts: bool,
    /// Allow abductive expansions in beam search.
    pub use_abduction: bool,
    /// Divide cumulative scores by step count when ranking finished trees.
    pub length_normalize: bool,
    /// Rank every expansion's partial tree as a candidate, not only
    /// stopped trajectories (the open-corpus setting: the answer is the
    /// best match to the hypothesis among all partial trees).
    pub collect_partials: bool,
}

impl Default for ReasonConfig {
    fn default() -> Self {
        ReasonConfig {
            delta: 0.001,
            beam_size: 3,
            top_p: 0.4,
            top_abd_p: 0.1,
            max_steps: 30,
            stop_threshold: 1e-6,
            rescore_facts: true,
            use_abduction: true,
            length_normalize: false,
            collect_partials: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReasonError {
    #[error("pool of {0} facts cannot seed a proof, need at least 2")]
    PoolExhausted(usize),
    #[error("generator failed: {0}")]
    GeneratorFailure(#[from] GenError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("no partial proofs to choose from")]
    EmptyInput,
}

/// One candidate move: the premises to compose and its probability under the
/// scorer. Head-based scorers always propose pairs; the gold scorer may
/// propose the full premise set of an n-ary gold step.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveCandidate {
    pub premises: Vec<NodeId>,
    pub prob: f64,
}

/// Scoring policy driving the search: trained heads or a gold-tree oracle.
pub trait Scorer {
    /// Distribution over candidate moves for the state; probabilities sum to 1.
    fn moves(&self, state: &ProofState) -> Result<Vec<MoveCandidate>, ScoreError>;
    /// Relevance of one pool entry to the hypothesis.
    fn fact_score(&self, hypothesis_vec: &[f64], entry: &PoolEntry) -> f64;
    /// Distribution over known-premise choices for decomposing `state.goal`.
    fn abduce(&self, state: &ProofState) -> Result<Vec<(NodeId, f64)>, ScoreError>;
}

impl Scorer for ControllerHeads {
    fn moves(&self, state: &ProofState) -> Result<Vec<MoveCandidate>, ScoreError> {
        Ok(score_steps(self, state)?
            .into_iter()
            .map(|((a, b), prob)| MoveCandidate { premises: vec![a, b], prob })
            .collect())
    }

    fn fact_score(&self, hypothesis_vec: &[f64], entry: &PoolEntry) -> f64 {
        score_fact(self, hypothesis_vec, &entry.vector).unwrap_or(0.0)
    }

    fn abduce(&self, state: &ProofState) -> Result<Vec<(NodeId, f64)>, ScoreError> {
        score_steps_abductive(self, state)
    }
}

/// Ranks gold steps first: proposes the earliest gold step (topological
/// order) whose premises are all present in the pool, with probability 1.
/// Intermediates are matched by normalized text, leaves by id.
pub struct GoldScorer {
    leaf_ids: std::collections::BTreeSet<NodeId>,
    steps: Vec<(Vec<Premise>, NodeId)>,
}

#[derive(Debug, Clone)]
enum Premise {
    Leaf(NodeId),
    IntText(String),
}

impl GoldScorer {
    pub fn from_tree(gold: &EntailmentTree) -> Self {
        let steps = gold
            .topological_steps()
            .into_iter()
            .map(|step| {
                let premises = step
                    .premises
                    .iter()
                    .map(|p| match p {
                        NodeId::Sent(_) => Premise::Leaf(*p),
                        other => Premise::IntText(normalize_text(
                            gold.node_text(*other).unwrap_or_default(),
                        )),
                    })
                    .collect();
                (premises, step.conclusion)
            })
            .collect();
        GoldScorer { leaf_ids: gold.leaf_ids(), steps }
    }

    fn match_premise(&self, state: &ProofState, premise: &Premise) -> Option<NodeId> {
        match premise {
            Premise::Leaf(id) => state.entry(*id).map(|e| e.id),
            Premise::IntText(text) => state
                .pool
                .iter()
                .find(|e| e.id.is_int() && normalize_text(&e.text) == *text)
                .map(|e| e.id),
        }
    }
}

impl Scorer for GoldScorer {
    fn moves(&self, state: &ProofState) -> Result<Vec<MoveCandidate>, ScoreError> {
        if state.pool.len() < 2 {
            return Err(ScoreError::PoolTooSmall(state.pool.len()));
        }
        for (premises, _) in &self.steps {
            let matched: Vec<NodeId> = premises
                .iter()
                .filter_map(|p| self.match_premise(state, p))
                .collect();
            if matched.len() == premises.len() {
                // Skip steps already taken: their conclusion is in the pool
                // or consumed; taking a step twice would reuse premises that
                // are no longer all present, so presence of all premises is
                // the readiness test.
                if state
                    .partial_steps
                    .iter()
                    .any(|s| s.premises == matched)
                {
                    continue;
                }
                return Ok(vec![MoveCandidate { premises: matched, prob: 1.0 }]);
            }
        }
        // No gold step is ready; fall back to a uniform pair distribution.
        let n = state.pool.len();
        let total = (n * (n - 1) / 2) as f64;
        let mut moves = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                moves.push(MoveCandidate {
                    premises: vec![state.pool[i].id, state.pool[j].id],
                    prob: 1.0 / total,
                });
            }
        }
        Ok(moves)
    }

    fn fact_score(&self, _hypothesis_vec: &[f64], entry: &PoolEntry) -> f64 {
        match entry.id {
            NodeId::Sent(_) if self.leaf_ids.contains(&entry.id) => 1.0,
            NodeId::Int(_) => 1.0,
            _ => 0.0,
        }
    }

    fn abduce(&self, state: &ProofState) -> Result<Vec<(NodeId, f64)>, ScoreError> {
        if state.pool.is_empty() {
            return Err(ScoreError::PoolTooSmall(0));
        }
        let p = 1.0 / state.pool.len() as f64;
        Ok(state.pool.iter().map(|e| (e.id, p)).collect())
    }
}

/// Keep facts whose relevance score clears `delta`, preserving input order.
/// When fewer than two survive, the top two by score are retained anyway so
/// the reasoner always has a legal move.
pub fn filter_facts(
    scorer: &dyn Scorer,
    hypothesis_vec: &[f64],
    pool: &[PoolEntry],
    delta: f64,
) -> Vec<PoolEntry> {
    let scores: Vec<f64> = pool
        .iter()
        .map(|e| scorer.fact_score(hypothesis_vec, e))
        .collect();
    let kept: Vec<PoolEntry> = pool
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s >= delta)
        .map(|(e, _)| e.clone())
        .collect();
    if kept.len() >= 2 || kept.len() >= pool.len() {
        return kept;
    }
    let mut ranked: Vec<usize> = (0..pool.len()).collect();
    ranked.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(pool[a].id.cmp(&pool[b].id))
    });
    let top: std::collections::BTreeSet<NodeId> =
        ranked.iter().take(2).map(|&i| pool[i].id).collect();
    pool.iter().filter(|e| top.contains(&e.id)).cloned().collect()
}

/// Smallest score-descending prefix whose probability mass reaches `p`;
/// never empty. Ties are broken by key so the output is deterministic.
pub fn nucleus_select<K: Ord + Clone>(distribution: &[(K, f64)], p: f64) -> Vec<K> {
    let mut sorted: Vec<&(K, f64)> = distribution.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out = Vec::new();
    let mut mass = 0.0;
    for (key, prob) in sorted {
        out.push(key.clone());
        mass += prob;
        if mass >= p {
            break;
        }
    }
    out
}

/// An abductive commitment awaiting its subgoal: `known` will pair with the
/// eventually derived node to conclude the node whose text is `concludes`
/// (the hypothesis for the outermost pending step).
#[derive(Debug, Clone, PartialEq)]
pub struct PendingStep {
    pub known: NodeId,
    pub concludes: String,
}

/// A partial construction: the remaining pool, built steps with generated
/// texts, the log-probability score, and any pending abductive commitments.
#[derive(Debug, Clone)]
pub struct PartialProof {
    pub entries: Vec<PoolEntry>,
    pub steps: Vec<Step>,
    pub int_texts: BTreeMap<NodeId, String>,
    pub next_int: u32,
    pub cumulative_score: f64,
    pub pending: Vec<PendingStep>,
    pub goal: GoalNode,
    pub last_built: Option<NodeId>,
    /// Texts of the original pool, for materializing leaves at finish.
    pub origin: Arc<BTreeMap<NodeId, String>>,
}

impl PartialProof {
    pub(crate) fn seed(
        model: &EmbeddingModel,
        hypothesis: &str,
        pool: &[PoolEntry],
    ) -> Result<Self, ReasonError> {
        let origin: BTreeMap<NodeId, String> =
            pool.iter().map(|e| (e.id, e.text.clone())).collect();
        Ok(PartialProof {
            entries: pool.to_vec(),
            steps: Vec::new(),
            int_texts: BTreeMap::new(),
            next_int: 1,
            cumulative_score: 0.0,
            pending: Vec::new(),
            goal: GoalNode {
                text: hypothesis.to_string(),
                vector: model.encode(hypothesis)?,
                tokens: model.vocab.indices(hypothesis),
            },
            last_built: None,
            origin: Arc::new(origin),
        })
    }

    /// View of the partial as a scoring state.
    pub(crate) fn as_state(&self, hypothesis: &str, hypothesis_vec: &[f64]) -> ProofState {
        ProofState {
            hypothesis: hypothesis.to_string(),
            hypothesis_vec: hypothesis_vec.to_vec(),
            hypothesis_tokens: Vec::new(),
            pool: self.entries.clone(),
            partial_steps: self.steps.clone(),
            gold_step: None,
            goal: Some(self.goal.clone()),
        }
    }

    /// Text of the node the partial currently treats as its root claim.
    pub fn root_text(&self) -> Option<&str> {
        let id = self.last_built?;
        self.int_texts.get(&id).map(|s| s.as_str())
    }

    /// Apply a deductive move: consume the premises, generate the conclusion,
    /// add it to the pool.
    pub(crate) fn apply_move(
        &mut self,
        model: &EmbeddingModel,
        generator: &crate::generator::GeneratorBackend,
        premises: &[NodeId],
        prob: f64,
    ) -> Result<(), ReasonError> {
        let texts: Vec<String> = premises
            .iter()
            .map(|p| {
                self.entries
                    .iter()
                    .find(|e| e.id == *p)
                    .map(|e| e.text.clone())
                    .unwrap_or_default()
            })
            .collect();
        let refs: Vec<&str> = texts.iter().map(|t| t.as_str()).collect();
        let conclusion_text = generator.generate_many(&refs)?;
        let id = NodeId::Int(self.next_int);
        self.next_int += 1;
        self.entries.retain(|e| !premises.contains(&e.id));
        let entry = PoolEntry::from_text(model, id, &conclusion_text)?;
        self.entries.push(entry);
        self.int_texts.insert(id, conclusion_text);
        self.steps.push(Step::new(premises.to_vec(), id));
        self.cumulative_score += prob.max(f64::MIN_POSITIVE).ln();
        self.last_built = Some(id);
        Ok(())
    }

    /// Apply an abductive move: commit `known` to the eventual step
    /// concluding the current goal, and chase the generated missing premise
    /// as the new goal.
    pub(crate) fn apply_abduce(
        &mut self,
        model: &EmbeddingModel,
        generator: &crate::generator::GeneratorBackend,
        known: NodeId,
        prob: f64,
    ) -> Result<(), ReasonError> {
        let known_text = self
            .entries
            .iter()
            .find(|e| e.id == known)
            .map(|e| e.text.clone())
            .unwrap_or_default();
        let missing = generator.generate(&crate::generator::GenRequest::Abduce {
            conclusion: self.goal.text.clone(),
            known_premise: known_text,
        })?;
        self.pending.push(PendingStep { known, concludes: self.goal.text.clone() });
        self.entries.retain(|e| e.id != known);
        self.goal = GoalNode {
            text: missing.clone(),
            vector: model.encode(&missing)?,
            tokens: model.vocab.indices(&missing),
        };
        self.cumulative_score += prob.max(f64::MIN_POSITIVE).ln();
        Ok(())
    }

    /// Ranking score: cumulative log-probability, optionally per step.
    pub fn ranking_score(&self, length_normalize: bool) -> f64 {
        let steps = (self.steps.len() + self.pending.len()).max(1) as f64;
        if length_normalize {
            self.cumulative_score / steps
        } else {
            self.cumulative_score
        }
    }

    /// Close the partial into a hypothesis-rooted tree: unwind pending
    /// abductive steps (or relabel the last conclusion), then prune to the
    /// root's component.
    pub(crate) fn finish(
        mut self,
        hypothesis: &str,
        goal_vec_of_hypothesis: &[f64],
        model: &EmbeddingModel,
    ) -> Result<FinishedTree, ReasonError> {
        // The node identified with the innermost goal.
        let terminal: NodeId = match self.last_built {
            Some(id) if self.entries.iter().any(|e| e.id == id) => id,
            _ => {
                // No deduction after the last abduction (or none at all):
                // take the pool entry nearest the goal, ties by id.
                let best = self
                    .entries
                    .iter()
                    .map(|e| {
                        let d = distance(&e.vector, &self.goal.vector).unwrap_or(f64::MAX);
                        (e.id, d)
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                match best {
                    Some((id, _)) => id,
                    None => return Err(ReasonError::PoolExhausted(0)),
                }
            }
        };

        // Ranking distance: a deductive finish measures its relabeled root
        // claim against the hypothesis; an abductive finish measures the
        // mean composition residual of the unwound chain: how far each
        // pinned step's summed premises are from the node it claims to
        // conclude, in the trained geometry.
        let mut root_claim_text: Option<String> = None;
        let mut chain_residual: Option<f64> = None;
        if self.pending.is_empty() {
            let pos = self
                .steps
                .iter()
                .position(|s| s.conclusion == terminal)
                .or(if self.steps.is_empty() { None } else { Some(self.steps.len() - 1) });
            let Some(pos) = pos else {
                return Err(ReasonError::PoolExhausted(self.entries.len()));
            };
            let conclusion = self.steps[pos].conclusion;
            root_claim_text = self.int_texts.remove(&conclusion);
            self.steps[pos].conclusion = NodeId::Hypothesis;
        } else {
            let node_text = |p: &PartialProof, id: NodeId| -> Option<String> {
                p.int_texts.get(&id).cloned().or_else(|| p.origin.get(&id).cloned())
            };
            let mut current = terminal;
            let mut current_text = node_text(&self, terminal).unwrap_or_default();
            let mut residual_sum = 0.0;
            let mut residual_n = 0usize;
            while let Some(pending) = self.pending.pop() {
                let conclusion = if self.pending.is_empty() {
                    NodeId::Hypothesis
                } else {
                    let id = NodeId::Int(self.next_int);
                    self.next_int += 1;
                    self.int_texts.insert(id, pending.concludes.clone());
                    id
                };
                let known_text = node_text(&self, pending.known).unwrap_or_default();
                if let (Ok(k), Ok(c), Ok(g)) = (
                    model.encode(&known_text),
                    model.encode(&current_text),
                    model.encode(&pending.concludes),
                ) {
                    residual_sum += distance(&vec_add(&k, &c), &g).unwrap_or(f64::MAX);
                    residual_n += 1;
                }
                self.steps.push(Step::binary(pending.known, current, conclusion));
                current = conclusion;
                current_text = pending.concludes;
            }
            if residual_n > 0 {
                chain_residual = Some(residual_sum / residual_n as f64);
            }
        }

        // Prune to the steps reachable from the root.
        let keep = reachable_steps(&self.steps);
        let steps: Vec<Step> = keep.into_iter().map(|i| self.steps[i].clone()).collect();
        let mut used_sents = std::collections::BTreeSet::new();
        let mut used_ints = std::collections::BTreeSet::new();
        for step in &steps {
            for p in &step.premises {
                match p {
                    NodeId::Sent(_) => {
                        used_sents.insert(*p);
                    }
                    NodeId::Int(_) => {
                        used_ints.insert(*p);
                    }
                    NodeId::Hypothesis => {}
                }
            }
        }
        let leaves: Vec<Fact> = used_sents
            .iter()
            .map(|id| Fact::new(*id, self.origin.get(id).cloned().unwrap_or_default()))
            .collect();
        let intermediates: BTreeMap<NodeId, String> = self
            .int_texts
            .iter()
            .filter(|(id, _)| used_ints.contains(id))
            .map(|(id, t)| (*id, t.clone()))
            .collect();

        let goal_distance = match (&root_claim_text, chain_residual) {
            (Some(text), _) if !text.is_empty() => {
                distance(&model.encode(text)?, goal_vec_of_hypothesis).unwrap_or(f64::MAX)
            }
            (_, Some(residual)) => residual,
            _ => 0.0,
        };

        let tree = EntailmentTree {
            hypothesis: hypothesis.to_string(),
            leaves,
            intermediates,
            steps,
        };
        Ok(FinishedTree {
            tree,
            cumulative_score: self.cumulative_score,
            goal_distance,
            step_count: self.steps.len(),
        })
    }
}

/// Indices of steps in the root's component, premises-first order preserved.
fn reachable_steps(steps: &[Step]) -> Vec<usize> {
    let mut keep = Vec::new();
    let mut wanted: Vec<NodeId> = vec![NodeId::Hypothesis];
    let mut seen = std::collections::BTreeSet::new();
    while let Some(node) = wanted.pop() {
        if !seen.insert(node) {
            continue;
        }
        if let Some(pos) = steps.iter().position(|s| s.conclusion == node) {
            keep.push(pos);
            wanted.extend(steps[pos].premises.iter().copied());
        }
    }
    keep.sort_unstable();
    keep
}

/// A finished construction with its ranking keys.
#[derive(Debug, Clone)]
pub struct FinishedTree {
    pub tree: EntailmentTree,
    pub cumulative_score: f64,
    pub goal_distance: f64,
    pub step_count: usize,
}

/// Encode a fact pool into entries, erroring on empty texts.
pub fn pool_entries(model: &EmbeddingModel, pool: &[Fact]) -> Result<Vec<PoolEntry>, ReasonError> {
    pool.iter()
        .map(|f| PoolEntry::from_text(model, f.id, &f.text).map_err(ReasonError::from))
        .collect()
}
