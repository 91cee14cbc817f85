//! Serializer emitting the linearized proof notation.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{EntailmentTree, NodeId, Step, ValidationMode, Violation};

#[derive(Debug, Error, PartialEq)]
#[error("cannot serialize invalid tree: {violations:?}")]
pub struct SerializeError {
    pub violations: Vec<Violation>,
}

/// Emit steps premises-before-conclusions. Input order is kept when it is
/// already topological; otherwise steps are re-sorted by Kahn's algorithm
/// with the conclusion `NodeId` as tie-break, so output is deterministic.
pub fn serialize_proof(tree: &EntailmentTree) -> Result<String, SerializeError> {
    let violations = tree.validate(ValidationMode::Lenient);
    if !violations.is_empty() {
        return Err(SerializeError { violations });
    }

    let order: Vec<&Step> = if is_topological(&tree.steps) {
        tree.steps.iter().collect()
    } else {
        kahn_order(&tree.steps)
    };

    let rendered: Vec<String> = order
        .iter()
        .map(|step| {
            let lhs = step
                .premises
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(" & ");
            match step.conclusion {
                NodeId::Hypothesis => format!("{lhs} -> hypothesis"),
                id => format!("{lhs} -> {id}: {}", tree.intermediates[&id]),
            }
        })
        .collect();
    Ok(rendered.join("; "))
}

impl EntailmentTree {
    /// Steps in an order where premises precede conclusions: input order when
    /// already topological, Kahn order with `NodeId` tie-break otherwise.
    pub fn topological_steps(&self) -> Vec<&Step> {
        if is_topological(&self.steps) {
            self.steps.iter().collect()
        } else {
            kahn_order(&self.steps)
        }
    }
}

fn is_topological(steps: &[Step]) -> bool {
    let mut produced: BTreeSet<NodeId> = BTreeSet::new();
    for step in steps {
        if step.premises.iter().any(|p| p.is_int() && !produced.contains(p)) {
            return false;
        }
        produced.insert(step.conclusion);
    }
    true
}

fn kahn_order(steps: &[Step]) -> Vec<&Step> {
    let mut produced: BTreeSet<NodeId> = BTreeSet::new();
    let mut remaining: Vec<&Step> = steps.iter().collect();
    let mut out = Vec::with_capacity(steps.len());
    while !remaining.is_empty() {
        let ready = remaining
            .iter()
            .enumerate()
            .filter(|(_, s)| s.premises.iter().all(|p| !p.is_int() || produced.contains(p)))
            .min_by_key(|(_, s)| s.conclusion);
        match ready {
            Some((idx, _)) => {
                let step = remaining.remove(idx);
                produced.insert(step.conclusion);
                out.push(step);
            }
            // Unreachable on validated trees; validation rejects cycles.
            None => {
                out.append(&mut remaining);
            }
        }
    }
    out
}
