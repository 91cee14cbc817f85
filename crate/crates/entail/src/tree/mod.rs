//! Entailment-tree domain model: node identities, facts, steps, whole trees,
//! and structural validation.
//!
//! A tree explains a hypothesis from leaf facts through composition steps.
//! Leaves are context sentences (`sentK`), internal conclusions are
//! intermediates (`intK`), and the single root is the hypothesis.

mod parse;
mod serialize;

pub use parse::{parse_proof, ParseError};
pub use serialize::serialize_proof;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Identity of a node in an entailment tree.
///
/// Ordering is `Sent < Int < Hypothesis`, with numeric order within a kind;
/// used as the deterministic tie-break throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    /// A context sentence, `sent<k>` with k >= 1.
    Sent(u32),
    /// A generated intermediate conclusion, `int<k>` with k >= 1.
    Int(u32),
    /// The unique root.
    Hypothesis,
}

impl NodeId {
    pub fn is_sent(&self) -> bool {
        matches!(self, NodeId::Sent(_))
    }

    pub fn is_int(&self) -> bool {
        matches!(self, NodeId::Int(_))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Sent(k) => write!(f, "sent{k}"),
            NodeId::Int(k) => write!(f, "int{k}"),
            NodeId::Hypothesis => write!(f, "hypothesis"),
        }
    }
}

impl serde::Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("not a node id: {0:?}")]
pub struct NodeIdParseError(pub String);

impl FromStr for NodeId {
    type Err = NodeIdParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "hypothesis" {
            return Ok(NodeId::Hypothesis);
        }
        for (prefix, ctor) in [
            ("sent", NodeId::Sent as fn(u32) -> NodeId),
            ("int", NodeId::Int as fn(u32) -> NodeId),
        ] {
            if let Some(rest) = s.strip_prefix(prefix) {
                if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                    if let Ok(k) = rest.parse::<u32>() {
                        if k >= 1 {
                            return Ok(ctor(k));
                        }
                    }
                }
            }
        }
        Err(NodeIdParseError(s.to_string()))
    }
}

/// A context sentence, optionally labeled as relevant (`Some(true)`) or a
/// distractor (`Some(false)`) in supervised splits.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Fact {
    pub id: NodeId,
    pub text: String,
    pub relevance_label: Option<bool>,
}

impl Fact {
    pub fn new(id: NodeId, text: impl Into<String>) -> Self {
        Fact { id, text: text.into(), relevance_label: None }
    }
}

/// A single composition step: two (or, in lenient gold data, more) premises
/// entailing one conclusion.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Step {
    pub premises: Vec<NodeId>,
    pub conclusion: NodeId,
}

impl Step {
    pub fn new(premises: Vec<NodeId>, conclusion: NodeId) -> Self {
        Step { premises, conclusion }
    }

    pub fn binary(a: NodeId, b: NodeId, conclusion: NodeId) -> Self {
        Step { premises: vec![a, b], conclusion }
    }

    pub fn is_binary(&self) -> bool {
        self.premises.len() == 2
    }

    /// Premise set with a canonical (sorted) order.
    pub fn premise_set(&self) -> BTreeSet<NodeId> {
        self.premises.iter().copied().collect()
    }
}

/// An entailment tree: hypothesis root, leaf facts, intermediate conclusion
/// texts, and the steps connecting them.
///
/// Immutable after construction; all accessors are read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct EntailmentTree {
    pub hypothesis: String,
    pub leaves: Vec<Fact>,
    pub intermediates: BTreeMap<NodeId, String>,
    pub steps: Vec<Step>,
}

/// Validation strictness. `Lenient` accepts the irregularities present in
/// gold data (n-ary steps, reused premises); `Strict` is what the reasoner
/// requires of its own outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    #[default]
    Lenient,
    Strict,
}

/// A single violated tree invariant, naming the offending node where one exists.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("node {0} is concluded by more than one step")]
    DuplicateConclusion(NodeId),
    #[error("step {0} references {1} which is neither a leaf nor a produced intermediate")]
    DanglingReference(usize, NodeId),
    #[error("intermediate {0} is never concluded by any step")]
    OrphanIntermediate(NodeId),
    #[error("no step concludes the hypothesis")]
    MissingHypothesisStep,
    #[error("step graph contains a cycle through {0}")]
    Cycle(NodeId),
    #[error("leaf {0} is not reachable from the root")]
    UnreachableLeaf(NodeId),
    #[error("step {0} conclusion {1} is a leaf")]
    LeafConclusion(usize, NodeId),
    #[error("step {0} repeats premise {1}")]
    RepeatedPremise(usize, NodeId),
    #[error("step {0} has {1} premises, expected exactly 2")]
    NonBinaryStep(usize, usize),
    #[error("node {0} is used as a premise by more than one step")]
    PremiseReuse(NodeId),
    #[error("hypothesis appears as a premise in step {0}")]
    HypothesisAsPremise(usize),
    #[error("intermediate {0} has empty text")]
    EmptyIntermediateText(NodeId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid tree: {0}")]
    Invalid(Violation),
}

impl EntailmentTree {
    /// All node ids present in the tree: leaves, intermediates, hypothesis.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.leaves.iter().map(|f| f.id).collect();
        ids.extend(self.intermediates.keys().copied());
        ids.push(NodeId::Hypothesis);
        ids
    }

    pub fn contains(&self, node: NodeId) -> bool {
        match node {
            NodeId::Hypothesis => true,
            NodeId::Sent(_) => self.leaves.iter().any(|f| f.id == node),
            NodeId::Int(_) => self.intermediates.contains_key(&node),
        }
    }

    /// Text of a node: leaf text, intermediate text, or the hypothesis.
    pub fn node_text(&self, node: NodeId) -> Option<&str> {
        match node {
            NodeId::Hypothesis => Some(self.hypothesis.as_str()),
            NodeId::Sent(_) => self.leaves.iter().find(|f| f.id == node).map(|f| f.text.as_str()),
            NodeId::Int(_) => self.intermediates.get(&node).map(|s| s.as_str()),
        }
    }

    /// The step concluding `node`, if any.
    pub fn concluding_step(&self, node: NodeId) -> Option<&Step> {
        self.steps.iter().find(|s| s.conclusion == node)
    }

    pub fn leaf_ids(&self) -> BTreeSet<NodeId> {
        self.leaves.iter().map(|f| f.id).collect()
    }

    /// Check every structural invariant, returning all violations found.
    ///
    /// An empty result means the tree is well-formed under the given mode.
    pub fn validate(&self, mode: ValidationMode) -> Vec<Violation> {
        let mut violations = Vec::new();
        let leaf_ids: BTreeSet<NodeId> = self.leaf_ids();

        let mut concluded: HashMap<NodeId, usize> = HashMap::new();
        let mut premise_uses: HashMap<NodeId, usize> = HashMap::new();

        for (idx, step) in self.steps.iter().enumerate() {
            if step.conclusion.is_sent() {
                violations.push(Violation::LeafConclusion(idx, step.conclusion));
            }
            *concluded.entry(step.conclusion).or_insert(0) += 1;
            let mut seen = HashSet::new();
            for &p in &step.premises {
                if p == NodeId::Hypothesis {
                    violations.push(Violation::HypothesisAsPremise(idx));
                    continue;
                }
                if !seen.insert(p) {
                    violations.push(Violation::RepeatedPremise(idx, p));
                }
                if !leaf_ids.contains(&p) && !self.intermediates.contains_key(&p) {
                    violations.push(Violation::DanglingReference(idx, p));
                }
                *premise_uses.entry(p).or_insert(0) += 1;
            }
            if mode == ValidationMode::Strict && !step.is_binary() {
                violations.push(Violation::NonBinaryStep(idx, step.premises.len()));
            }
        }

        for (node, count) in concluded.iter() {
            if *count > 1 {
                violations.push(Violation::DuplicateConclusion(*node));
            }
        }
        for id in self.intermediates.keys() {
            if !concluded.contains_key(id) {
                violations.push(Violation::OrphanIntermediate(*id));
            }
            if self.intermediates[id].trim().is_empty() {
                violations.push(Violation::EmptyIntermediateText(*id));
            }
        }
        if !concluded.contains_key(&NodeId::Hypothesis) {
            violations.push(Violation::MissingHypothesisStep);
        }
        if mode == ValidationMode::Strict {
            for (node, count) in premise_uses.iter() {
                if *count > 1 {
                    violations.push(Violation::PremiseReuse(*node));
                }
            }
        }

        // Cycle check: walk conclusion -> premises; a node on the current
        // DFS path seen again closes a cycle.
        let mut visiting: HashSet<NodeId> = HashSet::new();
        let mut done: HashSet<NodeId> = HashSet::new();
        let mut cycle_at: Option<NodeId> = None;
        for step in &self.steps {
            self.cycle_dfs(step.conclusion, &mut visiting, &mut done, &mut cycle_at);
        }
        if let Some(node) = cycle_at {
            violations.push(Violation::Cycle(node));
        }

        // Reachability only makes sense without cycles and with a root step.
        if cycle_at.is_none() && concluded.contains_key(&NodeId::Hypothesis) {
            let reachable = self.reachable_from_root();
            for leaf in &leaf_ids {
                if !reachable.contains(leaf) {
                    violations.push(Violation::UnreachableLeaf(*leaf));
                }
            }
        }

        violations.sort_by_key(|v| format!("{v:?}"));
        violations.dedup();
        violations
    }

    fn cycle_dfs(
        &self,
        node: NodeId,
        visiting: &mut HashSet<NodeId>,
        done: &mut HashSet<NodeId>,
        cycle_at: &mut Option<NodeId>,
    ) {
        if done.contains(&node) || cycle_at.is_some() {
            return;
        }
        if !visiting.insert(node) {
            *cycle_at = Some(node);
            return;
        }
        if let Some(step) = self.concluding_step(node) {
            for &p in &step.premises {
                self.cycle_dfs(p, visiting, done, cycle_at);
            }
        }
        visiting.remove(&node);
        done.insert(node);
    }

    fn reachable_from_root(&self) -> HashSet<NodeId> {
        let mut seen = HashSet::new();
        let mut stack = vec![NodeId::Hypothesis];
        while let Some(node) = stack.pop() {
            if !seen.insert(node) {
                continue;
            }
            if let Some(step) = self.concluding_step(node) {
                stack.extend(step.premises.iter().copied());
            }
        }
        seen
    }

    /// Leaf ids in `node`'s subtree; the singleton set for a leaf itself.
    pub fn leaf_descendants(&self, node: NodeId) -> Result<BTreeSet<NodeId>, TreeError> {
        if !self.contains(node) {
            return Err(TreeError::UnknownNode(node));
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![node];
        let mut guard = 0usize;
        let limit = 2 * (self.leaves.len() + self.intermediates.len() + 2);
        while let Some(n) = stack.pop() {
            guard += 1;
            if guard > limit * limit + 4 {
                return Err(TreeError::Invalid(Violation::Cycle(n)));
            }
            match self.concluding_step(n) {
                Some(step) => stack.extend(step.premises.iter().copied()),
                None => {
                    if n.is_sent() {
                        out.insert(n);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Edge distance from the root; the root itself is level 0.
    pub fn node_level(&self, node: NodeId) -> Result<usize, TreeError> {
        if !self.contains(node) {
            return Err(TreeError::UnknownNode(node));
        }
        let mut level: HashMap<NodeId, usize> = HashMap::new();
        level.insert(NodeId::Hypothesis, 0);
        let mut queue = std::collections::VecDeque::from([NodeId::Hypothesis]);
        while let Some(n) = queue.pop_front() {
            let l = level[&n];
            if let Some(step) = self.concluding_step(n) {
                for &p in &step.premises {
                    level.entry(p).or_insert_with(|| {
                        queue.push_back(p);
                        l + 1
                    });
                }
            }
        }
        level.get(&node).copied().ok_or(TreeError::UnknownNode(node))
    }
}

/// Normalize whitespace: trim and collapse internal runs to single spaces.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_step_tree() -> EntailmentTree {
        EntailmentTree {
            hypothesis: "ice forms outside in winter".into(),
            leaves: vec![
                Fact::new(NodeId::Sent(1), "water freezes at zero degrees"),
                Fact::new(NodeId::Sent(2), "winter is cold"),
                Fact::new(NodeId::Sent(3), "puddles are made of water"),
            ],
            intermediates: BTreeMap::from([(NodeId::Int(1), "water freezes in winter".to_string())]),
            steps: vec![
                Step::binary(NodeId::Sent(1), NodeId::Sent(2), NodeId::Int(1)),
                Step::binary(NodeId::Int(1), NodeId::Sent(3), NodeId::Hypothesis),
            ],
        }
    }

    #[test]
    fn valid_tree_has_no_violations() {
        assert!(two_step_tree().validate(ValidationMode::Strict).is_empty());
    }

    #[test]
    fn duplicate_conclusion_flagged() {
        let mut tree = two_step_tree();
        tree.steps.push(Step::binary(NodeId::Sent(2), NodeId::Sent(3), NodeId::Int(1)));
        let violations = tree.validate(ValidationMode::Lenient);
        assert!(violations.contains(&Violation::DuplicateConclusion(NodeId::Int(1))));
    }

    #[test]
    fn dangling_reference_flagged() {
        let mut tree = two_step_tree();
        tree.steps[0].premises[1] = NodeId::Sent(9);
        let violations = tree.validate(ValidationMode::Lenient);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::DanglingReference(0, NodeId::Sent(9)))));
    }

    #[test]
    fn premise_reuse_flagged_only_in_strict() {
        let mut tree = two_step_tree();
        // sent2 feeds both steps.
        tree.steps[1].premises[1] = NodeId::Sent(2);
        tree.leaves.remove(2);
        assert!(tree
            .validate(ValidationMode::Lenient)
            .iter()
            .all(|v| !matches!(v, Violation::PremiseReuse(_))));
        assert!(tree
            .validate(ValidationMode::Strict)
            .contains(&Violation::PremiseReuse(NodeId::Sent(2))));
    }

    #[test]
    fn cycle_flagged() {
        let mut tree = two_step_tree();
        tree.intermediates.insert(NodeId::Int(2), "loops".into());
        tree.steps[0].premises[0] = NodeId::Int(2);
        tree.steps.push(Step::binary(NodeId::Int(1), NodeId::Sent(1), NodeId::Int(2)));
        let violations = tree.validate(ValidationMode::Lenient);
        assert!(violations.iter().any(|v| matches!(v, Violation::Cycle(_))));
    }

    #[test]
    fn leaf_descendants_matches_recursive_oracle() {
        // Independent oracle: plain recursion over concluding steps.
        fn oracle(tree: &EntailmentTree, node: NodeId) -> BTreeSet<NodeId> {
            match tree.concluding_step(node) {
                None => {
                    if node.is_sent() {
                        BTreeSet::from([node])
                    } else {
                        BTreeSet::new()
                    }
                }
                Some(step) => step
                    .premises
                    .iter()
                    .flat_map(|p| oracle(tree, *p))
                    .collect(),
            }
        }
        let tree = two_step_tree();
        assert_eq!(
            tree.leaf_descendants(NodeId::Sent(1)).unwrap(),
            BTreeSet::from([NodeId::Sent(1)])
        );
        assert_eq!(
            tree.leaf_descendants(NodeId::Int(1)).unwrap(),
            BTreeSet::from([NodeId::Sent(1), NodeId::Sent(2)])
        );
        for node in tree.node_ids() {
            assert_eq!(tree.leaf_descendants(node).unwrap(), oracle(&tree, node));
        }
        assert_eq!(
            tree.leaf_descendants(NodeId::Sent(7)),
            Err(TreeError::UnknownNode(NodeId::Sent(7)))
        );
    }

    #[test]
    fn node_level_matches_bfs_positions() {
        let tree = two_step_tree();
        assert_eq!(tree.node_level(NodeId::Hypothesis).unwrap(), 0);
        assert_eq!(tree.node_level(NodeId::Int(1)).unwrap(), 1);
        assert_eq!(tree.node_level(NodeId::Sent(3)).unwrap(), 1);
        assert_eq!(tree.node_level(NodeId::Sent(1)).unwrap(), 2);
        assert_eq!(tree.node_level(NodeId::Sent(2)).unwrap(), 2);
        // Premise sits one level below its conclusion, for every step.
        for step in &tree.steps {
            let cl = tree.node_level(step.conclusion).unwrap();
            for &p in &step.premises {
                assert_eq!(tree.node_level(p).unwrap(), cl + 1);
            }
        }
    }

    #[test]
    fn node_id_round_trip() {
        for id in [NodeId::Sent(1), NodeId::Sent(17), NodeId::Int(3), NodeId::Hypothesis] {
            assert_eq!(id.to_string().parse::<NodeId>().unwrap(), id);
        }
        assert!("sent0".parse::<NodeId>().is_err());
        assert!("sent".parse::<NodeId>().is_err());
        assert!("intx".parse::<NodeId>().is_err());
        assert!("".parse::<NodeId>().is_err());
    }

    #[test]
    fn normalize_collapses_whitespace() {
        assert_eq!(normalize_text("  water \t freezes\n at zero "), "water freezes at zero");
    }
}
