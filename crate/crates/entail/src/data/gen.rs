//! Random gold-tree construction over the synthetic lexicon.
//!
//! A tree is a bracketing of a relation path: tokens t0..tL joined by edge
//! sentences "t_k VERB t_{k+1}", each edge carrying its own relation verb
//! from an ordered pool. A span shows the verb of its rightmost edge, and
//! merges happen in ascending verb priority, so the gold composition order
//! is recoverable from the texts alone, the property a selection controller
//! is supposed to learn. Verbs cancel out of the sum-composition constraint
//! (only the shared interior token is pinned by it), so encoder training
//! leaves their identities intact. Interior path tokens come from the link
//! pools; endpoints are entities.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::tree::{EntailmentTree, Fact, NodeId, Step};

struct PathFamily {
    links: Vec<String>,
    verbs: Vec<String>,
}

fn family(rng: &mut ChaCha8Rng) -> PathFamily {
    let lex = crate::generator::lexicon();
    if rng.gen_bool(0.5) {
        PathFamily { links: lex.causal_links, verbs: lex.causal_verbs }
    } else {
        PathFamily { links: lex.part_links, verbs: lex.part_verbs }
    }
}

fn edge_text(verb: &str, from: &str, to: &str) -> String {
    format!("{from} {verb} {to}")
}

/// One open span of the path during construction.
struct SpanNode {
    id: NodeId,
    from: usize,
    to: usize,
}

/// Build a gold tree with the given step arities. Leaves get ids
/// `sent1..sentL` in path order; intermediates are numbered in creation
/// order and the final merge concludes the hypothesis.
pub fn build_tree(rng: &mut ChaCha8Rng, arities: &[usize]) -> EntailmentTree {
    let lex = crate::generator::lexicon();
    let fam = family(rng);
    let leaf_count: usize = arities.iter().sum::<usize>() - (arities.len() - 1);
    assert!(leaf_count >= 2 || arities.len() == 1, "a tree needs at least one merge");
    assert!(leaf_count <= fam.links.len(), "path longer than the link pool");
    assert!(leaf_count <= fam.verbs.len(), "path longer than the verb pool");

    // Path tokens: entity, L-1 distinct links, entity.
    let start = lex.entities[rng.gen_range(0..lex.entities.len())].clone();
    let end = loop {
        let e = &lex.entities[rng.gen_range(0..lex.entities.len())];
        if *e != start {
            break e.clone();
        }
    };
    let mut link_indices: Vec<usize> = (0..fam.links.len()).collect();
    link_indices.shuffle(rng);
    link_indices.truncate(leaf_count - 1);
    let mut tokens: Vec<String> = Vec::with_capacity(leaf_count + 1);
    tokens.push(start);
    tokens.extend(link_indices.iter().map(|&i| fam.links[i].clone()));
    tokens.push(end);

    // One distinct verb per edge; a lower pool index merges earlier.
    let mut verb_indices: Vec<usize> = (0..fam.verbs.len()).collect();
    verb_indices.shuffle(rng);
    verb_indices.truncate(leaf_count);
    let verb = |edge: usize| fam.verbs[verb_indices[edge]].as_str();

    let leaves: Vec<Fact> = (0..leaf_count)
        .map(|k| {
            Fact::new(
                NodeId::Sent(k as u32 + 1),
                edge_text(verb(k), &tokens[k], &tokens[k + 1]),
            )
        })
        .collect();

    let mut spans: Vec<SpanNode> = (0..leaf_count)
        .map(|k| SpanNode { id: NodeId::Sent(k as u32 + 1), from: k, to: k + 1 })
        .collect();
    let mut steps = Vec::with_capacity(arities.len());
    let mut intermediates = BTreeMap::new();
    let mut next_int = 1u32;

    #[allow(clippy::explicit_counter_loop)] // next_int advances only on inner merges
    for (pos, &arity) in arities.iter().enumerate() {
        // Merge `arity` consecutive spans: the window of arity-1 boundaries
        // whose highest left-span verb priority is smallest. A boundary's
        // priority is the verb rank of the span ending at it (that span's
        // rightmost edge).
        let window = arity - 1;
        let best = (0..spans.len() - window)
            .min_by_key(|&i| {
                (i..i + window)
                    .map(|j| verb_indices[spans[j].to - 1])
                    .max()
                    .unwrap_or(usize::MAX)
            })
            .expect("at least one window");
        let merged: Vec<SpanNode> = spans.drain(best..best + arity).collect();
        let premises: Vec<NodeId> = merged.iter().map(|s| s.id).collect();
        let (from, to) = (merged[0].from, merged[merged.len() - 1].to);
        let text = edge_text(verb(to - 1), &tokens[from], &tokens[to]);

        let last = pos + 1 == arities.len();
        if last {
            steps.push(Step::new(premises, NodeId::Hypothesis));
            return EntailmentTree { hypothesis: text, leaves, intermediates, steps };
        }
        let id = NodeId::Int(next_int);
        next_int += 1;
        intermediates.insert(id, text.clone());
        steps.push(Step::new(premises, id));
        spans.insert(best, SpanNode { id, from, to });
    }
    unreachable!("the final arity concludes the hypothesis")
}

/// A random valid binary tree with between 2 and `max_leaves` leaves.
pub fn random_tree(seed: u64, max_leaves: usize) -> EntailmentTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves = rng.gen_range(2..=max_leaves.max(2));
    build_tree(&mut rng, &vec![2; leaves - 1])
}

/// First `n` whitespace words of a text.
fn prefix_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

/// Deterministic conclusion text for arbitrary premises; bounded length.
fn compose_text(premises: &[&str]) -> String {
    premises
        .iter()
        .map(|p| prefix_words(p, 3))
        .collect::<Vec<_>>()
        .join(" and ")
}

/// A random binary tree over the given leaf facts (all of them used),
/// composing fresh intermediate texts. Useful as a structural perturbation
/// of a gold tree sharing its leaf universe.
pub fn random_tree_over(leaves: &[Fact], seed: u64) -> EntailmentTree {
    assert!(leaves.len() >= 2, "need at least two leaves");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(NodeId, String)> =
        leaves.iter().map(|f| (f.id, f.text.clone())).collect();
    let mut steps = Vec::new();
    let mut intermediates = BTreeMap::new();
    let mut next_int = 1u32;
    while pool.len() > 1 {
        let i = rng.gen_range(0..pool.len());
        let a = pool.remove(i);
        let j = rng.gen_range(0..pool.len());
        let b = pool.remove(j);
        let (a, b) = if a.0 <= b.0 { (a, b) } else { (b, a) };
        let text = compose_text(&[a.1.as_str(), b.1.as_str()]);
        if pool.is_empty() {
            steps.push(Step::binary(a.0, b.0, NodeId::Hypothesis));
            return EntailmentTree {
                hypothesis: text,
                leaves: leaves.to_vec(),
                intermediates,
                steps,
            };
        }
        let id = NodeId::Int(next_int);
        next_int += 1;
        intermediates.insert(id, text.clone());
        steps.push(Step::binary(a.0, b.0, id));
        pool.push((id, text));
    }
    unreachable!("loop returns on the final step")
}

/// A distinct distractor sentence drawn from the lexicon.
fn leaf_sentence(rng: &mut ChaCha8Rng, lex: &crate::generator::Lexicon) -> String {
    let e = &lex.entities[rng.gen_range(0..lex.entities.len())];
    match rng.gen_range(0..4u8) {
        0 => format!("{e} is {}", lex.properties[rng.gen_range(0..lex.properties.len())]),
        1 => {
            format!("{e} has property {}", lex.properties[rng.gen_range(0..lex.properties.len())])
        }
        2 => {
            let m = &lex.causal_links[rng.gen_range(0..lex.causal_links.len())];
            format!("{e} causes {m}")
        }
        _ => {
            let m = &lex.part_links[rng.gen_range(0..lex.part_links.len())];
            format!("{e} is part of {m}")
        }
    }
}

/// Distractor facts with ids following the tree's leaves.
pub fn random_distractors(seed: u64, tree: &EntailmentTree, count: usize) -> Vec<Fact> {
    let lex = crate::generator::lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd157);
    let start = tree.leaves.len() as u32 + 1;
    (0..count as u32)
        .map(|k| Fact {
            id: NodeId::Sent(start + k),
            text: leaf_sentence(&mut rng, &lex),
            relevance_label: Some(false),
        })
        .collect()
}

/// Perturb a tree by swapping the step positions of `swaps` random leaf
/// pairs. Shape and leaf set are preserved; descendant sets change locally,
/// the way an imperfect prediction's do.
pub fn perturb_tree(tree: &EntailmentTree, swaps: usize, seed: u64) -> EntailmentTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = tree.clone();
    for _ in 0..swaps {
        let slots: Vec<(usize, usize)> = out
            .steps
            .iter()
            .enumerate()
            .flat_map(|(si, step)| {
                step.premises
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.is_sent())
                    .map(move |(pi, _)| (si, pi))
                    .collect::<Vec<_>>()
            })
            .collect();
        if slots.len() < 2 {
            break;
        }
        let a = slots[rng.gen_range(0..slots.len())];
        let b = slots[rng.gen_range(0..slots.len())];
        if a == b {
            continue;
        }
        let pa = out.steps[a.0].premises[a.1];
        let pb = out.steps[b.0].premises[b.1];
        if pa == pb || out.steps[a.0].premises.contains(&pb) || out.steps[b.0].premises.contains(&pa)
        {
            continue;
        }
        out.steps[a.0].premises[a.1] = pb;
        out.steps[b.0].premises[b.1] = pa;
    }
    out
}
